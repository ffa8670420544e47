#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace coop {

// ---------------------------------------------------------------------------
// Error types. Names match the conditions they signal; all carry a message.
// ---------------------------------------------------------------------------

struct DimensionMismatch : std::invalid_argument {
    explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};
struct NonPositiveDepth : std::invalid_argument {
    explicit NonPositiveDepth(const std::string& what) : std::invalid_argument(what) {}
};
struct NonFiniteSample : std::invalid_argument {
    explicit NonFiniteSample(const std::string& what) : std::invalid_argument(what) {}
};
struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};
struct InsufficientObservations : std::logic_error {
    explicit InsufficientObservations(const std::string& what) : std::logic_error(what) {}
};
struct EmptyCandidateList : std::invalid_argument {
    explicit EmptyCandidateList(const std::string& what) : std::invalid_argument(what) {}
};
struct EmptyMask : std::runtime_error {
    explicit EmptyMask(const std::string& what) : std::runtime_error(what) {}
};
struct EmptyValidSet : std::runtime_error {
    explicit EmptyValidSet(const std::string& what) : std::runtime_error(what) {}
};
struct EmptyFrustum : std::invalid_argument {
    explicit EmptyFrustum(const std::string& what) : std::invalid_argument(what) {}
};
struct DivergedLoss : std::runtime_error {
    explicit DivergedLoss(const std::string& what) : std::runtime_error(what) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Dense row-major H x W grid.
// ---------------------------------------------------------------------------

template <typename T>
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int h_, int w_, T fill = T{}) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    T& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    const T& at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }
};

using GridD = Grid<double>;

// ---------------------------------------------------------------------------
// Minimal fixed-size linear algebra. Only what the projection chain needs.
// ---------------------------------------------------------------------------

struct Vec2 {
    double x = 0, y = 0;
};

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
    // row-major
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }
    static Mat3 skew(const Vec3& v) {
        Mat3 r;
        r.m = {0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0};
        return r;
    }
    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
        return r;
    }
    Mat3 operator*(double s) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    double trace() const { return m[0] + m[4] + m[8]; }
};

using Vec6 = std::array<double, 6>;

// ---------------------------------------------------------------------------
// Seeding discipline: every consumer derives an mt19937_64 from a 64-bit
// subseed via splitmix64(seed ^ index).
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t subseed(uint64_t seed, uint64_t index) { return splitmix64(seed ^ index); }

}  // namespace coop
