#pragma once

// Umbrella header for the feature-space adaptation toolkit.

#include "featadapt/adapters.hpp"
#include "featadapt/autodiff.hpp"
#include "featadapt/checkpoint.hpp"
#include "featadapt/config.hpp"
#include "featadapt/datasets.hpp"
#include "featadapt/eem.hpp"
#include "featadapt/errors.hpp"
#include "featadapt/experiments.hpp"
#include "featadapt/gradcheck.hpp"
#include "featadapt/io.hpp"
#include "featadapt/manifest.hpp"
#include "featadapt/metrics.hpp"
#include "featadapt/models.hpp"
#include "featadapt/numeric.hpp"
#include "featadapt/rng.hpp"
#include "featadapt/tensor.hpp"
#include "featadapt/trainer.hpp"
