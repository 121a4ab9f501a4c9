#include "ksopt/fourier.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace ksopt {

namespace {

// Plans are reused per (rows, cols, direction). Creation is serialized (FFTW
// planning is not thread-safe); fftw_execute_dft on distinct buffers is.
// FFTW_UNALIGNED lets the cached plan run on any heap buffer.
fftw_plan plan_for(int rows, int cols, int sign) {
    static std::map<std::tuple<int, int, int>, fftw_plan> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto key = std::make_tuple(rows, cols, sign);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::vector<cplx> dummy_in(static_cast<std::size_t>(rows) * cols);
    std::vector<cplx> dummy_out(dummy_in.size());
    fftw_plan p = fftw_plan_dft_2d(rows, cols,
                                   reinterpret_cast<fftw_complex*>(dummy_in.data()),
                                   reinterpret_cast<fftw_complex*>(dummy_out.data()),
                                   sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    cache.emplace(key, p);
    return p;
}

void execute(int rows, int cols, int sign, const std::vector<cplx>& in, std::vector<cplx>& out) {
    fftw_plan p = plan_for(rows, cols, sign);
    fftw_execute_dft(p,
                     reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                     reinterpret_cast<fftw_complex*>(out.data()));
}

// Circular shift by (sr, sc): dst[(r+sr)%M][(c+sc)%N] = src[r][c].
std::vector<cplx> circshift(const std::vector<cplx>& src, int rows, int cols, int sr, int sc) {
    std::vector<cplx> dst(src.size());
    for (int r = 0; r < rows; ++r) {
        int rr = r + sr;
        if (rr >= rows) rr -= rows;
        for (int c = 0; c < cols; ++c) {
            int cc = c + sc;
            if (cc >= cols) cc -= cols;
            dst[static_cast<std::size_t>(rr) * cols + cc] = src[static_cast<std::size_t>(r) * cols + c];
        }
    }
    return dst;
}

std::vector<cplx> fftshift(const std::vector<cplx>& src, int rows, int cols) {
    return circshift(src, rows, cols, rows / 2, cols / 2);
}

std::vector<cplx> ifftshift(const std::vector<cplx>& src, int rows, int cols) {
    return circshift(src, rows, cols, rows - rows / 2, cols - cols / 2);
}

}  // namespace

ComplexImage2D to_complex(const Image2D& img) {
    ComplexImage2D out(img.height, img.width);
    for (std::size_t i = 0; i < img.size(); ++i) out.data[i] = cplx(img.data[i], 0.0);
    return out;
}

KSpace2D fft2_centered(const ComplexImage2D& img) {
    KSpace2D out(img.height, img.width);
    std::vector<cplx> raw(img.size());
    execute(img.height, img.width, FFTW_FORWARD, img.data, raw);
    out.data = fftshift(raw, img.height, img.width);
    const double scale = 1.0 / std::sqrt(static_cast<double>(img.size()));
    for (auto& v : out.data) v *= scale;
    return out;
}

KSpace2D fft2_centered(const Image2D& img) { return fft2_centered(to_complex(img)); }

ComplexImage2D ifft2_centered(const KSpace2D& k) {
    ComplexImage2D out(k.height, k.width);
    std::vector<cplx> shifted = ifftshift(k.data, k.height, k.width);
    execute(k.height, k.width, FFTW_BACKWARD, shifted, out.data);
    const double scale = 1.0 / std::sqrt(static_cast<double>(k.size()));
    for (auto& v : out.data) v *= scale;
    return out;
}

Image2D magnitude(const ComplexImage2D& c) {
    Image2D out(c.height, c.width);
    for (std::size_t i = 0; i < c.size(); ++i) out.data[i] = std::abs(c.data[i]);
    return out;
}

}  // namespace ksopt
