#pragma once

#include <cstdint>
#include <random>

#include "ratlab/tensor.hpp"

namespace ratlab {

// Explicit, splittable random stream. Nothing in the library draws from
// hidden global state; every stochastic routine takes one of these.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent child stream seeded from this stream's next outputs.
    Rng split() {
        std::seed_seq seq{engine_(), engine_(), engine_(), engine_()};
        Rng child(0);
        child.engine_.seed(seq);
        return child;
    }

    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    std::uint64_t index(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }
    bool coin() { return index(2) == 1; }

    Tensor normal_tensor(Shape shape) {
        Tensor t(std::move(shape));
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : t.data()) v = dist(engine_);
        return t;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace ratlab
