#pragma once

#include "warpreg/autodiff.hpp"
#include "warpreg/bench.hpp"
#include "warpreg/dataset.hpp"
#include "warpreg/demons.hpp"
#include "warpreg/errors.hpp"
#include "warpreg/fft.hpp"
#include "warpreg/image.hpp"
#include "warpreg/io_util.hpp"
#include "warpreg/metrics.hpp"
#include "warpreg/phase_correlation.hpp"
#include "warpreg/rng.hpp"
#include "warpreg/unet.hpp"
#include "warpreg/warp_field.hpp"
