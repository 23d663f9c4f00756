#pragma once

// Seeded random instance generation for verification runs. The generator is
// hand-rolled (splitmix64 + explicit uniform mapping) so streams are pinned
// across platforms and standard-library versions.

#include <cstdint>

#include "gridtariff/types.hpp"

namespace gridtariff {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return (next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
    }

private:
    std::uint64_t state_;
};

struct RandomInstanceOptions {
    int max_nodes = 3;
    int max_units = 4;
    bool small_scale = false;  // keeps objectives ~1e2..1e4 for absolute-gap oracle checks
    bool oracle_sized = false; // caps the inequality count for enumeration
};

MarketInstance random_instance(Rng& rng, const RandomInstanceOptions& opt = {});

// A tau draw inside the instance's box with sell < buy separated by at least `gap`.
VolumetricCharges random_tau(Rng& rng, const MarketInstance& inst, double gap = 0.0);

}  // namespace gridtariff
