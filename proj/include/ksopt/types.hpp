#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ksopt {

using cplx = std::complex<double>;

// Row-major 2D grid. Frequency-domain grids use the DC-centered convention:
// the DC sample lives at (height/2, width/2), for odd and even sizes alike.
template <class T>
struct Grid2D {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Grid2D() = default;
    Grid2D(int h, int w, T fill = T{})
        : height(h), width(w), data(check_dims(h, w), fill) {}

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

    std::size_t size() const { return data.size(); }

  private:
    static std::size_t check_dims(int h, int w) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("Grid2D: dimensions must be positive");
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
};

struct Image2D : Grid2D<double> { using Grid2D<double>::Grid2D; };
struct ComplexImage2D : Grid2D<cplx> { using Grid2D<cplx>::Grid2D; };
struct KSpace2D : Grid2D<cplx> { using Grid2D<cplx>::Grid2D; };

// Generic real-valued grid for intermediates (adjusted mass, soft masks, gradients).
struct RealGrid : Grid2D<double> { using Grid2D<double>::Grid2D; };

struct WeightMap : Grid2D<double> { using Grid2D<double>::Grid2D; };
struct ResidualMap : Grid2D<double> { using Grid2D<double>::Grid2D; };
struct ThresholdMatrix : Grid2D<double> { using Grid2D<double>::Grid2D; };

// Probabilistic sampling matrix. mean(data) == target_factor by construction;
// individual values may exceed 1 (clipped to 1 only when realizing Bernoulli draws).
struct ProbMask : Grid2D<double> {
    using Grid2D<double>::Grid2D;
    double target_factor = 0.0;
};

struct BinaryMask : Grid2D<std::uint8_t> {
    using Grid2D<std::uint8_t>::Grid2D;
    double factor = 0.0;  // achieved fraction of ones
};

inline int dc_row(int height) { return height / 2; }
inline int dc_col(int width) { return width / 2; }

inline long count_ones(const BinaryMask& m) {
    long n = 0;
    for (auto v : m.data) n += (v != 0);
    return n;
}

template <class A, class B>
void require_same_shape(const A& a, const B& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                                    std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}

// Adjusted sampling mass rectified to identically zero; callers must not scale it.
struct DegenerateMassError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unregularized normal equations with rank-deficient A^T A.
struct SingularSystemError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Density binary search could not bracket the requested sample count.
struct BracketError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ksopt
