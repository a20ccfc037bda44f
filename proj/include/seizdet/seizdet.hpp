#pragma once

#include "seizdet/error.hpp"
#include "seizdet/rng.hpp"
#include "seizdet/text_io.hpp"
#include "seizdet/parallel.hpp"
#include "seizdet/eeg_core.hpp"
#include "seizdet/synth.hpp"
#include "seizdet/spectral.hpp"
#include "seizdet/preprocess.hpp"
#include "seizdet/nn/tensor.hpp"
#include "seizdet/nn/layers.hpp"
#include "seizdet/nn/network.hpp"
#include "seizdet/nn/adam.hpp"
#include "seizdet/nn/grad_check.hpp"
#include "seizdet/nn/weights_io.hpp"
#include "seizdet/seiznet.hpp"
#include "seizdet/bpsvm.hpp"
#include "seizdet/evald.hpp"
#include "seizdet/am_decode.hpp"
