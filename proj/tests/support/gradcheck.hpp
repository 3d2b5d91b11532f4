#pragma once

#include <cstdint>

namespace gradcheck {

// Each returns the worst relative error of finite_diff_check over every
// parameter (and input where one is differentiable) of a randomized
// instance drawn from `seed`.

double layer_norm(std::uint64_t seed);
double sia(std::uint64_t seed);
double router(std::uint64_t seed, int hidden);
double router_batch(std::uint64_t seed, int hidden);
/// SIA -> post map -> normalize -> cosine -> InfoNCE, with text candidates in the mix.
double full_chain(std::uint64_t seed);

inline constexpr double kTolerance = 1e-4;

}  // namespace gradcheck
