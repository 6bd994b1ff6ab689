#pragma once

#include <cstddef>
#include <cstdint>

#include "atomic_sm/autodiff.hpp"
#include "atomic_sm/model.hpp"

namespace atomic_sm::model {

/// A small trading day (default 6 stocks, one lookback window each) with a mixed
/// relation graph: a direct chain, a shared-parent pair and an isolated node.
/// Parameters are drawn at a generic point rather than the training init.
struct GradCheckFixture {
  AtomicModel model;
  DayInput day;
};

GradCheckFixture make_gradcheck_fixture(const ModelConfig& config, std::uint64_t seed, std::size_t stocks = 6);

/// BCE loss of the whole network on the fixture day, checked against central
/// differences for every parameter tensor.
ad::GradCheckReport full_model_grad_check(const GradCheckFixture& fixture, const ad::GradCheckOptions& options = {});

}  // namespace atomic_sm::model
