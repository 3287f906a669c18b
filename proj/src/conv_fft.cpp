#include "conv_fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <mutex>
#include <new>
#include <vector>

namespace spectral_forge::nn::detail {

namespace {

constexpr std::size_t kChunk = 16;

struct Plan {
    std::size_t n = 0;
    std::size_t bins = 0;
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
};

template <typename T>
struct FftwBuffer {
    explicit FftwBuffer(std::size_t count) : data(static_cast<T*>(fftw_malloc(sizeof(T) * count))) {
        if (!data) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    T* data;
};

// Planning is not thread-safe in FFTW, execution on new arrays is. ESTIMATE
// keeps the chosen algorithm, and so the rounding, identical across runs.
// Every array handed to a plan comes from fftw_malloc, so alignment matches.
const Plan& plan_for(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, Plan> plans;
    std::lock_guard lock(mutex);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;

    FftwBuffer<double> real(n);
    FftwBuffer<fftw_complex> spec(n / 2 + 1);
    const int len = static_cast<int>(n);
    Plan p{n, n / 2 + 1, fftw_plan_dft_r2c_1d(len, real.data, spec.data, FFTW_ESTIMATE),
           fftw_plan_dft_c2r_1d(len, spec.data, real.data, FFTW_ESTIMATE)};
    return plans.emplace(n, p).first->second;
}

/// Half spectra of `rows` real rows, stored chunk-major: bins are split into
/// chunks of kChunk and, within a chunk, each row keeps kChunk real parts
/// followed by kChunk imaginary parts. One mixing pass over a chunk then
/// reads contiguous memory.
struct Spectra {
    std::size_t rows = 0;
    std::size_t bins = 0;
    std::size_t chunks = 0;
    double* data = nullptr;

    double* real(std::size_t row, std::size_t chunk) const { return data + (chunk * rows + row) * 2 * kChunk; }
    double* imag(std::size_t row, std::size_t chunk) const { return real(row, chunk) + kChunk; }
};

/// Per-thread scratch reused across calls, so large buffers are not
/// returned to the system and faulted back in on every batch.
struct Workspace {
    std::vector<double> slots[5];

    Spectra take(std::size_t slot, std::size_t rows, std::size_t bins) {
        const std::size_t chunks = (bins + kChunk - 1) / kChunk;
        auto& v = slots[slot];
        if (v.size() < rows * chunks * 2 * kChunk) v.resize(rows * chunks * 2 * kChunk);
        return {rows, bins, chunks, v.data()};
    }
};

Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
}

/// Spectrum of each source row, zero-padded to n with the row starting at
/// `offset`. Bins past `bins` in the last chunk are zero.
void rfft_rows(const Plan& plan, const double* src, std::size_t len, std::size_t offset, const Spectra& out) {
    FftwBuffer<double> buf(plan.n);
    FftwBuffer<fftw_complex> spec(out.chunks * kChunk);
    std::fill_n(buf.data, plan.n, 0.0);
    for (std::size_t f = plan.bins; f < out.chunks * kChunk; ++f) spec.data[f][0] = spec.data[f][1] = 0.0;
    for (std::size_t r = 0; r < out.rows; ++r) {
        std::copy_n(src + r * len, len, buf.data + offset);
        fftw_execute_dft_r2c(plan.forward, buf.data, spec.data);
        for (std::size_t c = 0; c < out.chunks; ++c) {
            double* re = out.real(r, c);
            double* im = out.imag(r, c);
            for (std::size_t f = 0; f < kChunk; ++f) {
                re[f] = spec.data[c * kChunk + f][0];
                im[f] = spec.data[c * kChunk + f][1];
            }
        }
    }
}

/// Inverse of rfft_rows: row r of `dst` receives samples [from, from + len)
/// of the inverse transform.
void irfft_rows(const Plan& plan, const Spectra& in, std::size_t from, std::size_t len, double* dst) {
    const double scale = 1.0 / static_cast<double>(plan.n);
    FftwBuffer<double> buf(plan.n);
    FftwBuffer<fftw_complex> spec(in.chunks * kChunk);
    for (std::size_t r = 0; r < in.rows; ++r) {
        for (std::size_t c = 0; c < in.chunks; ++c) {
            const double* re = in.real(r, c);
            const double* im = in.imag(r, c);
            for (std::size_t f = 0; f < kChunk; ++f) {
                spec.data[c * kChunk + f][0] = re[f];
                spec.data[c * kChunk + f][1] = im[f];
            }
        }
        fftw_execute_dft_c2r(plan.inverse, spec.data, buf.data);
        for (std::size_t i = 0; i < len; ++i) dst[r * len + i] = buf.data[from + i] * scale;
    }
}

enum class Conj { None, Left, Right };

/// Row indices of a product out(i, j) = sum_k A(i, k) * B(k, j), each
/// entry a whole spectrum multiplied bin by bin.
struct MixLayout {
    std::size_t ni, nj, nk;
    std::size_t a_i, a_k;  // A row = i * a_i + k * a_k
    std::size_t b_k, b_j;  // B row = k * b_k + j * b_j
    std::size_t o_i, o_j;  // out row = i * o_i + j * o_j
};

// Eight doubles; plain arrays of accumulators get spilled to the stack on
// every term, vector-typed locals stay in registers.
using Vec = double __attribute__((vector_size(64)));
constexpr std::size_t kLanes = sizeof(Vec) / sizeof(double);
static_assert(kChunk == 2 * kLanes);

inline Vec load(const double* p) {
    Vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store(double* p, Vec v) { std::memcpy(p, &v, sizeof v); }

template <Conj C>
inline void madd(Vec& re, Vec& im, Vec ar, Vec ai, Vec br, Vec bi) {
    if constexpr (C == Conj::None) {
        re += ar * br - ai * bi;
        im += ar * bi + ai * br;
    } else if constexpr (C == Conj::Right) {
        re += ar * br + ai * bi;
        im += ai * br - ar * bi;
    } else {
        re += ar * br + ai * bi;
        im += ar * bi - ai * br;
    }
}

/// Bins are processed in chunks so the operands of one chunk stay in cache;
/// the accumulators of one output chunk stay in registers across k.
template <Conj C>
void mix(const Spectra& out, const Spectra& a, const Spectra& b, const MixLayout& m) {
    for (std::size_t c = 0; c < out.chunks; ++c) {
        for (std::size_t i = 0; i < m.ni; ++i) {
            for (std::size_t j = 0; j < m.nj; ++j) {
                Vec re0{}, im0{}, re1{}, im1{};
                for (std::size_t k = 0; k < m.nk; ++k) {
                    const std::size_t ra = i * m.a_i + k * m.a_k;
                    const std::size_t rb = k * m.b_k + j * m.b_j;
                    const double* ar = a.real(ra, c);
                    const double* ai = a.imag(ra, c);
                    const double* br = b.real(rb, c);
                    const double* bi = b.imag(rb, c);
                    madd<C>(re0, im0, load(ar), load(ai), load(br), load(bi));
                    madd<C>(re1, im1, load(ar + kLanes), load(ai + kLanes), load(br + kLanes), load(bi + kLanes));
                }
                const std::size_t ro = i * m.o_i + j * m.o_j;
                store(out.real(ro, c), re0);
                store(out.real(ro, c) + kLanes, re1);
                store(out.imag(ro, c), im0);
                store(out.imag(ro, c) + kLanes, im1);
            }
        }
    }
}

}  // namespace

std::size_t fft_size(std::size_t len) {
    for (std::size_t n = std::max<std::size_t>(len, 1);; ++n) {
        std::size_t m = n;
        for (std::size_t p : {2, 3, 5}) {
            while (m % p == 0) m /= p;
        }
        if (m == 1) return n;
    }
}

// With xp the padded input, out[i] = sum_j w[j] xp[i + j] is a circular
// correlation once n >= padded_len, so OUT = XP * conj(W) per bin.
Tensor fft_conv_forward(const Tensor& input, const Conv1DSpec& spec, const Tensor& weight, const Tensor& bias,
                        std::size_t left, std::size_t padded_len, std::size_t out_len) {
    const std::size_t batch = input.dim(0);
    const std::size_t len = input.dim(2);
    const std::size_t in_ch = spec.in_channels;
    const std::size_t out_ch = spec.out_channels;
    const Plan& plan = plan_for(fft_size(padded_len));
    auto& ws = workspace();

    const auto xf = ws.take(0, batch * in_ch, plan.bins);
    const auto wf = ws.take(1, out_ch * in_ch, plan.bins);
    const auto yf = ws.take(2, batch * out_ch, plan.bins);
    rfft_rows(plan, input.data.data(), len, left, xf);
    rfft_rows(plan, weight.data.data(), spec.kernel, 0, wf);
    // Y(b, o) = sum_c X(b, c) conj(W(o, c))
    mix<Conj::Right>(yf, xf, wf, {batch, out_ch, in_ch, in_ch, 1, 1, in_ch, out_ch, 1});

    Tensor out({batch, out_ch, out_len});
    irfft_rows(plan, yf, 0, out_len, out.data.data());
    for (std::size_t r = 0; r < batch * out_ch; ++r) {
        const double bv = bias.data[r % out_ch];
        for (std::size_t i = 0; i < out_len; ++i) out.data[r * out_len + i] += bv;
    }
    return out;
}

// dW[o, c, j] = sum_b sum_i dout[i] xp[i + j]   -> conj(D) * XP
// dxp[c, t]   = sum_o sum_j w[j] dout[t - j]    -> D * W
ParamGrads fft_conv_backward(const Tensor& upstream, const Tensor& input, const Conv1DSpec& spec, const Tensor& weight,
                             std::size_t left, std::size_t padded_len, std::size_t out_len, bool input_grad) {
    const std::size_t batch = input.dim(0);
    const std::size_t len = input.dim(2);
    const std::size_t in_ch = spec.in_channels;
    const std::size_t out_ch = spec.out_channels;
    const Plan& plan = plan_for(fft_size(padded_len));
    auto& ws = workspace();

    const auto xf = ws.take(0, batch * in_ch, plan.bins);
    const auto df = ws.take(2, batch * out_ch, plan.bins);
    const auto gwf = ws.take(3, out_ch * in_ch, plan.bins);
    rfft_rows(plan, input.data.data(), len, left, xf);
    rfft_rows(plan, upstream.data.data(), out_len, 0, df);
    // GW(o, c) = sum_b conj(D(b, o)) X(b, c)
    mix<Conj::Left>(gwf, df, xf, {out_ch, in_ch, batch, 1, out_ch, in_ch, 1, in_ch, 1});

    ParamGrads g{Tensor(input_grad ? input.shape : std::vector<std::size_t>{0}), Tensor(weight.shape),
                 Tensor({out_ch})};
    irfft_rows(plan, gwf, 0, spec.kernel, g.weight.data.data());
    if (input_grad) {
        const auto wf = ws.take(1, out_ch * in_ch, plan.bins);
        const auto gxf = ws.take(4, batch * in_ch, plan.bins);
        rfft_rows(plan, weight.data.data(), spec.kernel, 0, wf);
        // GX(b, c) = sum_o D(b, o) W(o, c)
        mix<Conj::None>(gxf, df, wf, {batch, in_ch, out_ch, out_ch, 1, in_ch, 1, in_ch, 1});
        irfft_rows(plan, gxf, left, len, g.input.data.data());
    }
    for (std::size_t r = 0; r < batch * out_ch; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < out_len; ++i) s += upstream.data[r * out_len + i];
        g.bias.data[r % out_ch] += s;
    }
    return g;
}

}  // namespace spectral_forge::nn::detail
