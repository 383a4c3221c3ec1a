#include "sparkprop/tensor/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sparkprop::tensor::ops {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>* t) { return t->defined() && t->requires_grad(); });
}

// Registers `fn` as the backward of `out` when recording is active and some
// input needs a gradient.
template <typename T, typename Fn>
void record(OpTag tag, std::vector<Tensor<T>> inputs, Tensor<T>& out, Fn&& fn) {
    Graph<T>* graph = active_graph<T>();
    if (graph == nullptr) return;
    bool needed = false;
    for (const auto& in : inputs) needed = needed || (in.defined() && in.requires_grad());
    if (!needed) return;
    out.set_requires_grad(true);
    graph->record(tag, std::move(inputs), out, std::forward<Fn>(fn));
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

// For every element of `shape` in row-major order, the offset given by
// `strides` (which may contain zeros for broadcast axes).
std::vector<std::size_t> strided_offsets(const Shape& shape, const std::vector<std::size_t>& strides) {
    const std::size_t n = numel(shape);
    std::vector<std::size_t> out(n);
    std::vector<std::size_t> idx(shape.size(), 0);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = offset;
        for (std::size_t ax = shape.size(); ax-- > 0;) {
            ++idx[ax];
            offset += strides[ax];
            if (idx[ax] < shape[ax]) break;
            offset -= strides[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

std::string shapes_message(std::string_view op, const Shape& a, const Shape& b) {
    return std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b);
}

struct Broadcast {
    Shape shape;
    std::vector<std::size_t> a_index;
    std::vector<std::size_t> b_index;
    bool trivial = false;
};

Broadcast broadcast(std::string_view op, const Shape& a, const Shape& b) {
    Broadcast bc;
    if (a == b) {
        bc.shape = a;
        bc.trivial = true;
        return bc;
    }
    const std::size_t rank = std::max(a.size(), b.size());
    Shape pa(rank, 1), pb(rank, 1);
    std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
    bc.shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) throw ShapeError(shapes_message(op, a, b));
        bc.shape[i] = std::max(pa[i], pb[i]);
    }
    auto sa = row_major_strides(pa);
    auto sb = row_major_strides(pb);
    for (std::size_t i = 0; i < rank; ++i) {
        if (pa[i] == 1) sa[i] = 0;
        if (pb[i] == 1) sb[i] = 0;
    }
    bc.a_index = strided_offsets(bc.shape, sa);
    bc.b_index = strided_offsets(bc.shape, sb);
    return bc;
}

enum class Binary { add, sub, mul, div };

template <typename T>
Tensor<T> binary(Binary kind, OpTag tag, const Tensor<T>& a, const Tensor<T>& b) {
    auto bc = std::make_shared<Broadcast>(broadcast(op_name(tag), a.shape(), b.shape()));
    Tensor<T> out(bc->shape);
    const T* pa = a.raw();
    const T* pb = b.raw();
    T* po = out.raw();
    const std::size_t n = out.numel();
    auto ia = [&](std::size_t i) { return bc->trivial ? i : bc->a_index[i]; };
    auto ib = [&](std::size_t i) { return bc->trivial ? i : bc->b_index[i]; };
    switch (kind) {
        case Binary::add:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[ia(i)] + pb[ib(i)];
            break;
        case Binary::sub:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[ia(i)] - pb[ib(i)];
            break;
        case Binary::mul:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[ia(i)] * pb[ib(i)];
            break;
        case Binary::div:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[ia(i)] / pb[ib(i)];
            break;
    }
    record<T>(tag, {a, b}, out, [kind, a, b, out, bc]() mutable {
        auto g = out.grad();
        const std::size_t count = g.size();
        auto ia = [&](std::size_t i) { return bc->trivial ? i : bc->a_index[i]; };
        auto ib = [&](std::size_t i) { return bc->trivial ? i : bc->b_index[i]; };
        if (a.requires_grad()) {
            auto ga = a.grad();
            for (std::size_t i = 0; i < count; ++i) {
                T d = g[i];
                if (kind == Binary::mul) d *= b.raw()[ib(i)];
                if (kind == Binary::div) d /= b.raw()[ib(i)];
                ga[ia(i)] += d;
            }
        }
        if (b.requires_grad()) {
            auto gb = b.grad();
            for (std::size_t i = 0; i < count; ++i) {
                T d = g[i];
                switch (kind) {
                    case Binary::add: break;
                    case Binary::sub: d = -d; break;
                    case Binary::mul: d *= a.raw()[ia(i)]; break;
                    case Binary::div: {
                        const T bv = b.raw()[ib(i)];
                        d = -d * a.raw()[ia(i)] / (bv * bv);
                        break;
                    }
                }
                gb[ib(i)] += d;
            }
        }
    });
    return out;
}

template <typename T>
void accumulate(const Tensor<T>& target, std::span<const T> delta) {
    auto g = target.grad();
    for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

// Index geometry shared by conv2d and conv3d_causal. Output frame n reads
// input frames n*stride_t + dt - (kt-1) for dt in [0, kt); conv2d is the
// kt=1 case. Column p of the unfolded matrix is (n, oy, ox); row k is
// (c, dt, ky, kx).
struct ConvGeometry {
    std::size_t frames_out, ci, h, w;
    std::size_t kt, kh, kw;
    std::size_t stride_t, stride, pad_y, pad_x;
    std::size_t ho, wo;

    std::size_t rows() const { return ci * kt * kh * kw; }
    std::size_t cols() const { return frames_out * ho * wo; }

    // Calls f(column_index, source_offset) for every in-bounds tap of row k;
    // out-of-bounds taps are reported through pad(column_index).
    template <typename F, typename Pad>
    void walk_row(std::size_t k, F&& f, Pad&& pad) const {
        const std::size_t kx = k % kw, ky = (k / kw) % kh, dt = (k / (kw * kh)) % kt, c = k / (kw * kh * kt);
        std::size_t col = 0;
        for (std::size_t n = 0; n < frames_out; ++n) {
            const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(n * stride_t + dt) - static_cast<std::ptrdiff_t>(kt - 1);
            for (std::size_t oy = 0; oy < ho; ++oy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad_y);
                if (it < 0 || iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                    for (std::size_t ox = 0; ox < wo; ++ox) pad(col++);
                    continue;
                }
                const std::size_t base = ((static_cast<std::size_t>(it) * ci + c) * h + static_cast<std::size_t>(iy)) * w;
                for (std::size_t ox = 0; ox < wo; ++ox, ++col) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad_x);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) {
                        pad(col);
                    } else {
                        f(col, base + static_cast<std::size_t>(ix));
                    }
                }
            }
        }
    }
};

template <typename T>
void unfold(const T* x, T* cols, const ConvGeometry& g) {
    const std::size_t p = g.cols();
    for (std::size_t k = 0; k < g.rows(); ++k) {
        T* row = cols + k * p;
        g.walk_row(k, [&](std::size_t col, std::size_t src) { row[col] = x[src]; },
                   [&](std::size_t col) { row[col] = T(0); });
    }
}

template <typename T>
void fold_add(T* gx, const T* dcols, const ConvGeometry& g) {
    const std::size_t p = g.cols();
    for (std::size_t k = 0; k < g.rows(); ++k) {
        const T* row = dcols + k * p;
        g.walk_row(k, [&](std::size_t col, std::size_t src) { gx[src] += row[col]; }, [](std::size_t) {});
    }
}

// Shared GEMM part of both convolutions: out[Co, P] = W[Co, K] * cols[K, P] + b.
// The output tensor is [B, Co, S] with P = B * S.
template <typename T>
struct ConvGemm {
    std::size_t co, k, batch, spatial;
    std::vector<T> cols;

    void forward(const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& out) const {
        const std::size_t p = batch * spatial;
        RowMatrix<T> y(co, p);
        ConstMapMatrix<T> w(weight.raw(), co, k);
        ConstMapMatrix<T> c(cols.data(), k, p);
        y.noalias() = w * c;
        T* po = out.raw();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < co; ++o) {
                const T shift = bias.defined() ? bias.raw()[o] : T(0);
                const T* src = y.data() + o * p + b * spatial;
                T* dst = po + (b * co + o) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) dst[s] = src[s] + shift;
            }
        }
    }

    // Returns dcols (empty when x does not need a gradient).
    std::vector<T> backward(const Tensor<T>& out, const Tensor<T>& weight, const Tensor<T>& bias,
                            bool need_input_grad) const {
        const std::size_t p = batch * spatial;
        RowMatrix<T> dy(co, p);
        auto g = out.grad();
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < co; ++o) {
                const T* src = g.data() + (b * co + o) * spatial;
                std::copy(src, src + spatial, dy.data() + o * p + b * spatial);
            }
        }
        ConstMapMatrix<T> c(cols.data(), k, p);
        if (weight.requires_grad()) {
            MapMatrix<T> gw(weight.grad().data(), co, k);
            gw.noalias() += dy * c.transpose();
        }
        if (bias.defined() && bias.requires_grad()) {
            auto gb = bias.grad();
            for (std::size_t o = 0; o < co; ++o) gb[o] += dy.row(o).sum();
        }
        std::vector<T> dcols;
        if (need_input_grad) {
            dcols.assign(k * p, T(0));
            ConstMapMatrix<T> w(weight.raw(), co, k);
            MapMatrix<T> dc(dcols.data(), k, p);
            dc.noalias() = w.transpose() * dy;
        }
        return dcols;
    }
};

template <typename T>
void check_bias(std::string_view op, const Tensor<T>& bias, std::size_t co) {
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
        throw ShapeError(std::string(op) + ": bias shape " + to_string(bias.shape()) +
                         " does not match " + std::to_string(co) + " output channels");
    }
}

template <typename T>
Tensor<T> reduce(OpTag tag, const Tensor<T>& x, std::span<const std::size_t> axes, bool average) {
    const Shape& in = x.shape();
    Shape out_shape = in;
    std::vector<bool> reduced(in.size(), false);
    for (auto ax : axes) {
        if (ax >= in.size()) {
            throw ShapeError(std::string(op_name(tag)) + ": axis " + std::to_string(ax) +
                             " out of range for " + to_string(in));
        }
        reduced[ax] = true;
        out_shape[ax] = 1;
    }
    auto ostrides = row_major_strides(out_shape);
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (reduced[i]) ostrides[i] = 0;
    }
    auto map = std::make_shared<std::vector<std::size_t>>(strided_offsets(in, ostrides));
    Tensor<T> out(out_shape);
    const std::size_t count = x.numel() / out.numel();
    const T norm = average ? T(1) / static_cast<T>(count) : T(1);
    // Accumulate in double for stable sums of long f32 vectors.
    std::vector<double> acc(out.numel(), 0.0);
    const T* px = x.raw();
    for (std::size_t i = 0; i < x.numel(); ++i) acc[(*map)[i]] += px[i];
    for (std::size_t i = 0; i < out.numel(); ++i) out.raw()[i] = static_cast<T>(acc[i]) * norm;
    record<T>(tag, {x}, out, [x, out, map, norm]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[(*map)[i]] * norm;
    });
    return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(Binary::add, OpTag::add, a, b);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(Binary::sub, OpTag::sub, a, b);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(Binary::mul, OpTag::mul, a, b);
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(Binary::div, OpTag::div, a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out.raw()[i] = x.raw()[i] * factor;
    record<T>(OpTag::scale, {x}, out, [x, out, factor]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) out.raw()[i] = x.raw()[i] + value;
    record<T>(OpTag::add_scalar, {x}, out, [x, out]() mutable { accumulate<T>(x, out.grad()); });
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError(shapes_message("matmul", a.shape(), b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out(Shape{m, n});
    MapMatrix<T>(out.raw(), m, n).noalias() = ConstMapMatrix<T>(a.raw(), m, k) * ConstMapMatrix<T>(b.raw(), k, n);
    record<T>(OpTag::matmul, {a, b}, out, [a, b, out, m, k, n]() mutable {
        ConstMapMatrix<T> g(out.grad().data(), m, n);
        if (a.requires_grad()) {
            MapMatrix<T>(a.grad().data(), m, k).noalias() += g * ConstMapMatrix<T>(b.raw(), k, n).transpose();
        }
        if (b.requires_grad()) {
            MapMatrix<T>(b.grad().data(), k, n).noalias() += ConstMapMatrix<T>(a.raw(), m, k).transpose() * g;
        }
    });
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
    if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) {
        throw ShapeError(shapes_message("conv2d", x.shape(), weight.shape()));
    }
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (h + 2 * pad < kh || w + 2 * pad < kw) throw ShapeError(shapes_message("conv2d", x.shape(), weight.shape()));
    check_bias("conv2d", bias, co);
    const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
    const std::size_t wo = (w + 2 * pad - kw) / stride + 1;

    const ConvGeometry geom{n, ci, h, w, 1, kh, kw, 1, stride, pad, pad, ho, wo};
    auto gemm = std::make_shared<ConvGemm<T>>();
    *gemm = ConvGemm<T>{co, geom.rows(), n, ho * wo, {}};
    gemm->cols.resize(geom.rows() * geom.cols());
    unfold(x.raw(), gemm->cols.data(), geom);

    Tensor<T> out(Shape{n, co, ho, wo});
    gemm->forward(weight, bias, out);
    record<T>(OpTag::conv2d, {x, weight, bias}, out, [x, weight, bias, out, gemm, geom]() {
        auto dcols = gemm->backward(out, weight, bias, x.requires_grad());
        if (x.requires_grad()) fold_add(x.grad().data(), dcols.data(), geom);
    });
    return out;
}

template <typename T>
Tensor<T> conv3d_causal(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride_t) {
    if (x.rank() != 4 || weight.rank() != 5 || x.dim(1) != weight.dim(1)) {
        throw ShapeError(shapes_message("conv3d_causal", x.shape(), weight.shape()));
    }
    if (stride_t == 0) throw ShapeError("conv3d_causal: temporal stride must be positive");
    const std::size_t t = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = weight.dim(0), kt = weight.dim(2), kh = weight.dim(3), kw = weight.dim(4);
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw ShapeError("conv3d_causal: spatial kernel must be odd, got " + to_string(weight.shape()));
    }
    check_bias("conv3d_causal", bias, co);
    const std::size_t to = 1 + (t - 1) / stride_t;
    const std::size_t ph = kh / 2, pw = kw / 2;
    const std::size_t hw = h * w;

    const ConvGeometry geom{to, ci, h, w, kt, kh, kw, stride_t, 1, ph, pw, h, w};
    auto gemm = std::make_shared<ConvGemm<T>>();
    *gemm = ConvGemm<T>{co, geom.rows(), to, hw, {}};
    gemm->cols.resize(geom.rows() * geom.cols());
    unfold(x.raw(), gemm->cols.data(), geom);

    Tensor<T> out(Shape{to, co, h, w});
    gemm->forward(weight, bias, out);
    record<T>(OpTag::conv3d_causal, {x, weight, bias}, out, [x, weight, bias, out, gemm, geom]() {
        auto dcols = gemm->backward(out, weight, bias, x.requires_grad());
        if (x.requires_grad()) fold_add(x.grad().data(), dcols.data(), geom);
    });
    return out;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.raw();
    T* po = out.raw();
    for (std::size_t i = 0; i < x.numel(); ++i) po[i] = px[i] / (T(1) + std::exp(-px[i]));
    record<T>(OpTag::silu, {x}, out, [x, out]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        const T* px = x.raw();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T s = T(1) / (T(1) + std::exp(-px[i]));
            gx[i] += g[i] * s * (T(1) + px[i] * (T(1) - s));
        }
    });
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const T v = x.raw()[i];
        out.raw()[i] = v > T(0) ? v : v * slope;
    }
    record<T>(OpTag::leaky_relu, {x}, out, [x, out, slope]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x.raw()[i] > T(0) ? g[i] : g[i] * slope;
    });
    return out;
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::size_t groups, T eps) {
    if (x.rank() < 2) throw ShapeError("group_norm: input must be at least 2-d, got " + to_string(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (groups == 0 || c % groups != 0) {
        throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
    }
    if (gamma.numel() != c || beta.numel() != c) {
        throw ShapeError(shapes_message("group_norm", x.shape(), gamma.shape()));
    }
    const std::size_t spatial = x.numel() / (n * c);
    const std::size_t cpg = c / groups;
    const std::size_t m = cpg * spatial;

    Tensor<T> out(x.shape());
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto inv_std = std::make_shared<std::vector<T>>(n * groups);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t base = (b * c + g * cpg) * spatial;
            double s = 0.0, ss = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += x.raw()[base + i];
            const double mu = s / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) {
                const double d = x.raw()[base + i] - mu;
                ss += d * d;
            }
            const T istd = static_cast<T>(1.0 / std::sqrt(ss / static_cast<double>(m) + static_cast<double>(eps)));
            (*inv_std)[b * groups + g] = istd;
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t ch = g * cpg + i / spatial;
                const T xh = (x.raw()[base + i] - static_cast<T>(mu)) * istd;
                (*xhat)[base + i] = xh;
                out.raw()[base + i] = xh * gamma.raw()[ch] + beta.raw()[ch];
            }
        }
    }
    record<T>(OpTag::group_norm, {x, gamma, beta}, out,
              [x, gamma, beta, out, xhat, inv_std, n, c, groups, cpg, spatial, m]() mutable {
                  auto g = out.grad();
                  if (gamma.requires_grad() || beta.requires_grad()) {
                      std::vector<T> dgamma(c, T(0)), dbeta(c, T(0));
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          const std::size_t ch = (i / spatial) % c;
                          dgamma[ch] += g[i] * (*xhat)[i];
                          dbeta[ch] += g[i];
                      }
                      if (gamma.requires_grad()) accumulate<T>(gamma, dgamma);
                      if (beta.requires_grad()) accumulate<T>(beta, dbeta);
                  }
                  if (!x.requires_grad()) return;
                  auto gx = x.grad();
                  std::vector<T> dxh(m);
                  for (std::size_t b = 0; b < n; ++b) {
                      for (std::size_t grp = 0; grp < groups; ++grp) {
                          const std::size_t base = (b * c + grp * cpg) * spatial;
                          T sum_d = 0, sum_dx = 0;
                          for (std::size_t i = 0; i < m; ++i) {
                              const std::size_t ch = grp * cpg + i / spatial;
                              dxh[i] = g[base + i] * gamma.raw()[ch];
                              sum_d += dxh[i];
                              sum_dx += dxh[i] * (*xhat)[base + i];
                          }
                          const T istd = (*inv_std)[b * groups + grp];
                          const T inv_m = T(1) / static_cast<T>(m);
                          for (std::size_t i = 0; i < m; ++i) {
                              gx[base + i] += istd * (dxh[i] - inv_m * sum_d - (*xhat)[base + i] * inv_m * sum_dx);
                          }
                      }
                  }
              });
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    Tensor<T> flat = x;
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), 0);
    Tensor<T> r = reduce<T>(OpTag::mean, x, axes, true);
    return r.rank() == 1 ? r : reshape(r, Shape{1});
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), 0);
    Tensor<T> r = reduce<T>(OpTag::sum, x, axes, false);
    return r.rank() == 1 ? r : reshape(r, Shape{1});
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::span<const std::size_t> axes) {
    return reduce<T>(OpTag::mean, x, axes, true);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::span<const std::size_t> axes) {
    return reduce<T>(OpTag::sum, x, axes, false);
}

template <typename T>
Tensor<T> sq_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError(shapes_message("sq_diff", a.shape(), b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const T d = a.raw()[i] - b.raw()[i];
        out.raw()[i] = d * d;
    }
    record<T>(OpTag::sq_diff, {a, b}, out, [a, b, out]() mutable {
        auto g = out.grad();
        if (a.requires_grad()) {
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += T(2) * (a.raw()[i] - b.raw()[i]) * g[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= T(2) * (a.raw()[i] - b.raw()[i]) * g[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
        if (!ok) throw ShapeError(shapes_message("concat", first, s));
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

    Tensor<T> out(out_shape);
    const std::size_t out_block = out_shape[axis] * inner;
    std::size_t offset = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t block = p.dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(p.raw() + o * block, block, out.raw() + o * out_block + offset);
        }
        offset += block;
    }
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    record<T>(OpTag::concat, inputs, out, [inputs, out, offsets, outer, inner, out_block, axis]() mutable {
        auto g = out.grad();
        for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
            auto& p = inputs[idx];
            if (!p.requires_grad()) continue;
            auto gp = p.grad();
            const std::size_t block = p.dim(axis) * inner;
            for (std::size_t o = 0; o < outer; ++o) {
                const T* src = g.data() + o * out_block + offsets[idx];
                T* dst = gp.data() + o * block;
                for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Tensor<T> parts[] = {a, b};
    return concat<T>(parts, 1);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= x.rank()) throw ShapeError("slice: axis out of range for " + to_string(x.shape()));
    if (begin >= end || end > x.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + to_string(x.shape()));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    Shape out_shape = x.shape();
    out_shape[axis] = end - begin;
    Tensor<T> out(out_shape);
    const std::size_t in_block = x.dim(axis) * inner, out_block = (end - begin) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x.raw() + o * in_block + begin * inner, out_block, out.raw() + o * out_block);
    }
    record<T>(OpTag::slice, {x}, out, [x, out, outer, in_block, out_block, begin, inner]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < out_block; ++i) gx[o * in_block + begin * inner + i] += g[o * out_block + i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::span<const std::pair<std::size_t, std::size_t>> widths, T value) {
    if (widths.size() != x.rank()) {
        throw ShapeError("pad: need one (before, after) pair per axis of " + to_string(x.shape()));
    }
    Shape out_shape = x.shape();
    std::size_t base = 0;
    auto ostrides = [&] {
        for (std::size_t i = 0; i < x.rank(); ++i) out_shape[i] += widths[i].first + widths[i].second;
        return row_major_strides(out_shape);
    }();
    for (std::size_t i = 0; i < x.rank(); ++i) base += widths[i].first * ostrides[i];
    auto map = std::make_shared<std::vector<std::size_t>>(strided_offsets(x.shape(), ostrides));
    Tensor<T> out = Tensor<T>::full(out_shape, value);
    for (std::size_t i = 0; i < x.numel(); ++i) out.raw()[base + (*map)[i]] = x.raw()[i];
    record<T>(OpTag::pad, {x}, out, [x, out, map, base]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[base + (*map)[i]];
    });
    return out;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor) {
    if (x.rank() < 2 || factor == 0) throw ShapeError("upsample_nearest: needs rank >= 2 and factor > 0");
    const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
    const std::size_t planes = x.numel() / (h * w);
    Shape out_shape = x.shape();
    out_shape[x.rank() - 2] = h * factor;
    out_shape[x.rank() - 1] = w * factor;
    Tensor<T> out(out_shape);
    const std::size_t oh = h * factor, ow = w * factor;
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                out.raw()[(p * oh + y) * ow + xx] = x.raw()[(p * h + y / factor) * w + xx / factor];
            }
        }
    }
    record<T>(OpTag::upsample_nearest, {x}, out, [x, out, planes, h, w, factor]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        const std::size_t oh = h * factor, ow = w * factor;
        for (std::size_t p = 0; p < planes; ++p) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    gx[(p * h + y / factor) * w + xx / factor] += g[(p * oh + y) * ow + xx];
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> downsample_stride(const Tensor<T>& x, std::size_t stride) {
    if (x.rank() < 2 || stride == 0) throw ShapeError("downsample_stride: needs rank >= 2 and stride > 0");
    const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
    const std::size_t planes = x.numel() / (h * w);
    const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    Shape out_shape = x.shape();
    out_shape[x.rank() - 2] = oh;
    out_shape[x.rank() - 1] = ow;
    Tensor<T> out(out_shape);
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                out.raw()[(p * oh + y) * ow + xx] = x.raw()[(p * h + y * stride) * w + xx * stride];
            }
        }
    }
    record<T>(OpTag::downsample_stride, {x}, out, [x, out, planes, h, w, oh, ow, stride]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t p = 0; p < planes; ++p) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    gx[(p * h + y * stride) * w + xx * stride] += g[(p * oh + y) * ow + xx];
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.numel()) throw ShapeError(shapes_message("reshape", x.shape(), shape));
    Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
    record<T>(OpTag::reshape, {x}, out, [x, out]() mutable { accumulate<T>(x, out.grad()); });
    return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::span<const std::size_t> order) {
    const std::size_t rank = x.rank();
    std::vector<bool> seen(rank, false);
    if (order.size() != rank) throw ShapeError("permute: order has wrong length for " + to_string(x.shape()));
    for (auto o : order) {
        if (o >= rank || seen[o]) throw ShapeError("permute: invalid axis order for " + to_string(x.shape()));
        seen[o] = true;
    }
    const auto in_strides = row_major_strides(x.shape());
    Shape out_shape(rank);
    std::vector<std::size_t> gather(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = x.dim(order[i]);
        gather[i] = in_strides[order[i]];
    }
    auto map = std::make_shared<std::vector<std::size_t>>(strided_offsets(out_shape, gather));
    Tensor<T> out(out_shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.raw()[i] = x.raw()[(*map)[i]];
    record<T>(OpTag::permute, {x}, out, [x, out, map]() mutable {
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*map)[i]] += g[i];
    });
    return out;
}

template <typename T>
Tensor<T> apply(std::string_view tag, std::span<const Tensor<T>> in, const Attrs& attrs) {
    const auto parsed = parse_op_tag(tag);
    if (!parsed) throw InvalidArgument("unknown op tag '" + std::string(tag) + "'");
    auto need = [&](std::size_t lo, std::size_t hi) {
        if (in.size() < lo || in.size() > hi) {
            throw InvalidArgument(std::string(tag) + ": expected " + std::to_string(lo) + ".." + std::to_string(hi) +
                                  " inputs, got " + std::to_string(in.size()));
        }
    };
    const Tensor<T> none;
    switch (*parsed) {
        case OpTag::add: need(2, 2); return add(in[0], in[1]);
        case OpTag::sub: need(2, 2); return sub(in[0], in[1]);
        case OpTag::mul: need(2, 2); return mul(in[0], in[1]);
        case OpTag::div: need(2, 2); return div(in[0], in[1]);
        case OpTag::scale: need(1, 1); return scale(in[0], static_cast<T>(attrs.scalar));
        case OpTag::add_scalar: need(1, 1); return add_scalar(in[0], static_cast<T>(attrs.scalar));
        case OpTag::matmul: need(2, 2); return matmul(in[0], in[1]);
        case OpTag::conv2d: need(2, 3); return conv2d(in[0], in[1], in.size() > 2 ? in[2] : none, attrs.stride, attrs.pad);
        case OpTag::conv3d_causal: need(2, 3); return conv3d_causal(in[0], in[1], in.size() > 2 ? in[2] : none, attrs.stride);
        case OpTag::silu: need(1, 1); return silu(in[0]);
        case OpTag::leaky_relu: need(1, 1); return leaky_relu(in[0], static_cast<T>(attrs.scalar));
        case OpTag::group_norm: need(3, 3); return group_norm(in[0], in[1], in[2], attrs.groups);
        case OpTag::mean: need(1, 1); return attrs.axes.empty() ? mean(in[0]) : mean<T>(in[0], attrs.axes);
        case OpTag::sum: need(1, 1); return attrs.axes.empty() ? sum(in[0]) : sum<T>(in[0], attrs.axes);
        case OpTag::sq_diff: need(2, 2); return sq_diff(in[0], in[1]);
        case OpTag::concat:
            need(1, in.size() + 1);
            return concat<T>(in, tag == "concat_channels" ? 1 : attrs.axis);
        case OpTag::slice: need(1, 1); return slice(in[0], attrs.axis, attrs.begin, attrs.end);
        case OpTag::pad: need(1, 1); return pad<T>(in[0], attrs.pads, static_cast<T>(attrs.scalar));
        case OpTag::upsample_nearest: need(1, 1); return upsample_nearest(in[0], attrs.factor);
        case OpTag::downsample_stride: need(1, 1); return downsample_stride(in[0], attrs.stride);
        case OpTag::reshape: need(1, 1); return reshape(in[0], attrs.shape);
        case OpTag::permute: need(1, 1); return permute<T>(in[0], attrs.axes);
    }
    throw InvalidArgument("unknown op tag '" + std::string(tag) + "'");
}

#define SPARKPROP_INSTANTIATE_OPS(T)                                                                      \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> scale(const Tensor<T>&, T);                                                        \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                   \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
    template Tensor<T> conv3d_causal(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);  \
    template Tensor<T> silu(const Tensor<T>&);                                                            \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                   \
    template Tensor<T> group_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, T);  \
    template Tensor<T> mean(const Tensor<T>&);                                                            \
    template Tensor<T> sum(const Tensor<T>&);                                                             \
    template Tensor<T> mean(const Tensor<T>&, std::span<const std::size_t>);                              \
    template Tensor<T> sum(const Tensor<T>&, std::span<const std::size_t>);                               \
    template Tensor<T> sq_diff(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                                   \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                    \
    template Tensor<T> pad(const Tensor<T>&, std::span<const std::pair<std::size_t, std::size_t>>, T);    \
    template Tensor<T> upsample_nearest(const Tensor<T>&, std::size_t);                                   \
    template Tensor<T> downsample_stride(const Tensor<T>&, std::size_t);                                  \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
    template Tensor<T> permute(const Tensor<T>&, std::span<const std::size_t>);                           \
    template Tensor<T> apply(std::string_view, std::span<const Tensor<T>>, const Attrs&);

SPARKPROP_INSTANTIATE_OPS(float)
SPARKPROP_INSTANTIATE_OPS(double)

#undef SPARKPROP_INSTANTIATE_OPS

}  // namespace sparkprop::tensor::ops
