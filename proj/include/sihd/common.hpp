#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sihd {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

// Raised for invalid inputs (bad files, out-of-range config, precondition
// violations). The CLI maps it to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a pipeline stage cannot complete. Exit code 2.
class StageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a; stable across platforms, used for config and artifact hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

/// Deterministic child seed for a named stage / index of a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

/// Shortest-free canonical form: 17 significant digits, as printed by "%.17g".
std::string format_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

double squared_distance(const Vec& a, const Vec& b);
double euclidean_distance(const Vec& a, const Vec& b);
double linf_distance(const Vec& a, const Vec& b);

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace sihd
