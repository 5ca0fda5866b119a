#pragma once

// Umbrella header for the dermaug pipeline library.

#include "dermaug/checkpoint.hpp"
#include "dermaug/classifiers.hpp"
#include "dermaug/curation.hpp"
#include "dermaug/dataset_io.hpp"
#include "dermaug/denoiser.hpp"
#include "dermaug/diffusion.hpp"
#include "dermaug/embedding.hpp"
#include "dermaug/errors.hpp"
#include "dermaug/evaluation.hpp"
#include "dermaug/generate.hpp"
#include "dermaug/image.hpp"
#include "dermaug/manifest.hpp"
#include "dermaug/nn.hpp"
#include "dermaug/normalization.hpp"
#include "dermaug/parallel.hpp"
#include "dermaug/pipeline.hpp"
#include "dermaug/png_io.hpp"
#include "dermaug/rng.hpp"
#include "dermaug/sampler.hpp"
#include "dermaug/scenarios.hpp"
#include "dermaug/schedule.hpp"
#include "dermaug/scoring.hpp"
#include "dermaug/sha256.hpp"
#include "dermaug/split.hpp"
#include "dermaug/taxonomy.hpp"
#include "dermaug/toy_data.hpp"
#include "dermaug/training.hpp"
