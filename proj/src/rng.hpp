/// rng.hpp - counter-based random number generation.
///
/// Every random draw in the project is keyed by (seed, stream, index) so that
/// artifacts are bitwise reproducible across platforms and across thread
/// counts: parallel loops hand each work item its own Rng instead of sharing
/// sequential generator state. std::mt19937 with std distributions is avoided
/// on purpose; distribution implementations differ between standard libraries
/// and would break byte-identical outputs.
#pragma once

#include <cstdint>
#include <span>

namespace sargen {

/// Independent random streams. New purposes get appended (values are part of
/// the artifact format, do not renumber).
enum class RngStream : std::uint64_t {
    kParamInit = 1,     // parameter initialization, index = per-tensor counter
    kDataPhase = 2,     // quasiperiodic snapshot phases, index = snapshot
    kDataNoise = 3,     // bimodal per-node noise, index = snapshot
    kDataSign = 4,      // bimodal snapshot sign, index = snapshot
    kReparam = 5,       // VAE reparameterization, index = step
    kLatentNoise = 6,   // sigma=0.01 latent noise injection, index = step
    kFlowTime = 7,      // flow-matching time draws, index = step
    kFlowNoise = 8,     // flow-matching endpoint noise, index = step
    kCoarseNoise = 9,   // noise on coarse-scale values fed to the AR module
    kSampleInit = 10,   // sampling initial noise, index = sample*K + (k-1)
    kTrainSample = 11,  // training example / scale selection, index = step
    kShuffle = 12,      // epoch shuffling
    kTest = 13,         // unit-test local randomness
};

/// Counter-based generator: key = mix(seed, stream, index), draws come from
/// repeatedly mixing key and an incrementing counter through SplitMix64.
class Rng {
  public:
    Rng(std::uint64_t seed, RngStream stream, std::uint64_t index);

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Standard normal via Box-Muller (caches the second variate).
    double gaussian();

    void fill_gaussian(std::span<double> out, double sigma = 1.0);
    void fill_uniform(std::span<double> out);

    /// Uniform integer in [0, n), n > 0. Uses rejection so the result is
    /// exactly uniform.
    std::uint64_t uniform_int(std::uint64_t n);

  private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sargen
