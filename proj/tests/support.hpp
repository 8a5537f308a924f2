#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "mimo/common.hpp"
#include "mimo/tensor.hpp"

namespace support {

// Plain triple-loop product, the reference the tuned kernels are held to.
inline std::vector<double> matmul_oracle(const std::vector<double>& a,
                                         const std::vector<double>& b, std::size_t m,
                                         std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double total = 0.0;
            for (std::size_t p = 0; p < k; ++p) total += a[i * k + p] * b[p * n + j];
            c[i * n + j] = total;
        }
    }
    return c;
}

inline mimo::Tensor random_tensor(mimo::Rng& rng, const std::vector<std::size_t>& shape,
                                  double lo, double hi) {
    mimo::Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = lo + rng.uniform() * (hi - lo);
    }
    return t;
}

// Upper chi-square quantile via the Wilson-Hilferty cube approximation;
// z is the standard-normal quantile of the same tail (3.0902 for 0.001).
inline double chi_square_critical(double df, double z) {
    const double a = 2.0 / (9.0 * df);
    const double c = 1.0 - a + z * std::sqrt(a);
    return df * c * c * c;
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mimo-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace support
