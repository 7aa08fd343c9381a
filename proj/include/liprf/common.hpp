#pragma once

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace liprf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned box in world units.
struct Bounds {
    Vec3 min = Vec3::Constant(-1.0);
    Vec3 max = Vec3::Constant(1.0);

    [[nodiscard]] Vec3 extent() const { return max - min; }
    [[nodiscard]] Vec3 center() const { return 0.5 * (min + max); }
    [[nodiscard]] bool contains(const Vec3& p, double tol = 0.0) const {
        return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
    }
    bool operator==(const Bounds& o) const { return min == o.min && max == o.max; }
};

inline int thread_count() {
#ifdef _OPENMP
    return omp_get_num_threads();
#else
    return 1;
#endif
}

inline int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

/// Keeps freed large blocks in the heap instead of returning them to the OS.
/// Training reallocates the same large matrices every step.
inline void retain_heap() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

namespace log {

enum class Level { Quiet, Info, Debug };

inline Level level() {
    static const Level lvl = [] {
        const char* env = std::getenv("LIPRF_LOG");
        if (env == nullptr) return Level::Info;
        const std::string_view s(env);
        if (s == "debug") return Level::Debug;
        if (s == "quiet" || s == "off") return Level::Quiet;
        return Level::Info;
    }();
    return lvl;
}

inline void info(const std::string& msg) {
    if (level() != Level::Quiet) std::cerr << "[liprf] " << msg << '\n';
}

inline void debug(const std::string& msg) {
    if (level() == Level::Debug) std::cerr << "[liprf:debug] " << msg << '\n';
}

}  // namespace log

}  // namespace liprf
