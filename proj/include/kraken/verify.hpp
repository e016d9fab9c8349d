#pragma once

// Randomized engine-vs-oracle equivalence suites and the exhaustive codec
// check, shared by `kraken-sim verify` and the test binaries.

#include "kraken/cutie.hpp"
#include "kraken/events.hpp"
#include "kraken/random.hpp"
#include "kraken/sne.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kraken::verify {

struct SneCase {
    sne::SneLayerConfig layer;
    sne::HwConfig hw;
    events::EventStream stream;  // spikes unique and raster-ordered per frame
};

/// Layers up to 8x8x2 input and 2 outputs; the hardware tile geometry is
/// shrunk at random so cases span several clusters and passes.
SneCase random_sne_case(Rng& rng);

struct CutieCase {
    cutie::CutieLayerConfig layer;
    cutie::TritTensor input;
};

/// Layers up to 8x8 input with up to 4 channels each side.
CutieCase random_cutie_case(Rng& rng);

cutie::TritTensor random_trits(Rng& rng, std::vector<std::size_t> dims, double zero_fraction = 1.0 / 3);

struct CaseOutcome {
    bool equal = true;
    std::string detail;
};

/// Event-driven engine vs dense oracle: per-frame spike multisets and final
/// membrane states.
CaseOutcome check_sne_case(const SneCase& c, bool inject_fault = false);
/// Engine vs dense convolution: output trits and accumulators. Also checks
/// the +-K*K*Ci accumulator bound.
CaseOutcome check_cutie_case(const CutieCase& c, bool inject_fault = false);

enum class Scope { All, Codec, Sne, Cutie };

/// Throws InvalidConfig for unknown names.
Scope parse_scope(const std::string& s);

struct Options {
    Scope scope = Scope::All;
    std::uint64_t seed = 1;
    std::size_t sne_cases = 500;
    std::size_t cutie_cases = 1000;
    /// Perturbs one threshold on the engine side of every comparison.
    bool inject_fault = false;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

std::vector<CheckResult> run(const Options& options);

}  // namespace kraken::verify
