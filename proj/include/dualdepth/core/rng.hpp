#pragma once

#include <cstdint>

namespace dualdepth {

/// Deterministic splitmix64 generator. The whole state is one u64, which is
/// what the checkpoint format persists. Stream layout used by the pipeline:
///   fork(kSceneStream)    scene sampling in gen_dataset (one child per triplet)
///   fork(kInitStream)     parameter initialization (params drawn in registration order)
///   fork(kAugmentStream)  per-epoch shuffling and augmentation draws
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr std::uint64_t kSceneStream = 0x5c3a9d1b0f6e2471ull;
    static constexpr std::uint64_t kInitStream = 0x9e3779b97f4a7c15ull;
    static constexpr std::uint64_t kAugmentStream = 0xd1b54a32d192ed03ull;

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    float uniform_f(float lo, float hi) {
        return static_cast<float>(uniform(lo, hi));
    }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Derives an independent child stream without advancing this one.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t z = state_ ^ (tag * 0xff51afd7ed558ccdull + 0x2545f4914f6cdd1dull);
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
        return Rng(z ^ (z >> 29));
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

}  // namespace dualdepth
