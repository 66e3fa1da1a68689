#pragma once

#include <cmath>
#include <cstdint>

namespace igc {

// Counter-based generator: output i of a stream is splitmix64(key ^ mix(i)),
// so identical (seed, stream) pairs reproduce bit-identically on any platform
// and substreams can be derived without sharing mutable state.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class CounterRng {
  public:
    explicit CounterRng(uint64_t seed, uint64_t stream = 0)
        : key_(splitmix64(seed ^ splitmix64(stream ^ 0xa5a5a5a5a5a5a5a5ULL))) {}

    CounterRng substream(uint64_t id) const { return CounterRng(key_, splitmix64(id) ^ 0x6a09e667f3bcc909ULL); }

    uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return n <= 1 ? 0 : next_u64() % n; }

    // standard normal via Box-Muller; second value cached
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    CounterRng(uint64_t key, uint64_t stream_tag) : key_(splitmix64(key ^ stream_tag)) {}

    uint64_t key_;
    uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace igc
