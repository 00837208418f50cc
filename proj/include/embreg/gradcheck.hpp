#pragma once

#include <cstdint>

#include "embreg/autodiff.hpp"
#include "embreg/corpus.hpp"
#include "embreg/model.hpp"

namespace embreg {

/// Tiny model for gradient checks: vocab 10/12, widths at most 6, two layers,
/// both heads on.
ModelConfig micro_model_config(std::uint64_t seed);

/// Two-sentence batch with random ids and sentence targets of width sent_dim.
Batch micro_batch(std::uint64_t seed, const ModelConfig& cfg);

/// Central-difference check of the full training objective (dropout on, fixed
/// masks) over every parameter of a seeded micro model.
GradCheckResult check_objective_gradients(std::uint64_t seed, double lambda, double beta);

}  // namespace embreg
