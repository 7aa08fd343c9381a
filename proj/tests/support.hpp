#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "liprf/liprf.hpp"

namespace liprf::test {

inline std::mt19937_64& rng() {
    static std::mt19937_64 r(1234);
    return r;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

inline Vec3 random_unit() {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v(n(rng()), n(rng()), n(rng()));
    return v.normalized();
}

/// Fresh empty directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "liprf_" + tag;
        if (info != nullptr) name += std::string("_") + info->test_suite_name() + "_" + info->name();
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Field with random density in [0, dmax] (a fraction zeroed) and Gaussian SH.
inline VoxelField random_field(int n, std::uint64_t seed, double dmax = 4.0, double zero_fraction = 0.3) {
    std::mt19937_64 r(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 0.5);
    VoxelField f({n, n, n}, Bounds{});
    for (double& d : f.density()) d = u(r) < zero_fraction ? 0.0 : dmax * u(r);
    for (double& c : f.sh()) c = g(r);
    return f;
}

inline Camera simple_camera(int w, int h, double focal, const Pose& pose) {
    Camera c;
    c.width = w;
    c.height = h;
    c.focal = focal;
    c.cx = 0.5 * w;
    c.cy = 0.5 * h;
    c.pose = pose;
    return c;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace liprf::test
