#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "pestgan/autograd.hpp"
#include "pestgan/nn.hpp"
#include "pestgan/tensor.hpp"

namespace pestgan {

/// Geometric moments of a k x k kernel, factorial-normalized:
/// entries(a,b) = 1/(a! b!) * sum_{u,v} W[v+r][u+r] u^a v^b
/// with x = column offset u (rightward positive) and y = row offset v
/// (downward positive). A kernel acts like d^{a+b}/dx^a dy^b exactly when
/// its moment matrix is 1 at (a,b) and 0 elsewhere.
template <typename T>
struct MomentMatrix {
    int k = 0;
    Tensor<T> entries;  // [k,k], row index a (x order), col index b (y order)

    MomentMatrix() = default;
    explicit MomentMatrix(int k_) : k(k_), entries({k_, k_}) {}

    T& at(int a, int b) { return entries.data[static_cast<size_t>(a) * k + b]; }
    const T& at(int a, int b) const { return entries.data[static_cast<size_t>(a) * k + b]; }
};

namespace detail {

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

/// coef[(a*k+b)*k*k + (i*k+j)] = u^a v^b / (a! b!), u=j-r, v=i-r.
template <typename T>
std::vector<T> moment_coefficients(int k) {
    int r = (k - 1) / 2;
    std::vector<T> coef(static_cast<size_t>(k) * k * k * k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
            double norm = 1.0 / (factorial(a) * factorial(b));
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    double u = j - r, v = i - r;
                    coef[((static_cast<size_t>(a) * k + b) * k + i) * k + j] =
                        static_cast<T>(std::pow(u, a) * std::pow(v, b) * norm);
                }
        }
    return coef;
}

template <typename T>
void check_kernel(const Tensor<T>& kernel) {
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1))
        throw std::invalid_argument("moment_matrix: kernel must be square");
    int k = kernel.dim(0);
    if (k < 3 || k % 2 == 0)
        throw std::invalid_argument("moment_matrix: kernel size must be odd and >= 3");
    if (!kernel.all_finite()) throw std::invalid_argument("moment_matrix: non-finite entry");
}

}  // namespace detail

template <typename T>
MomentMatrix<T> moment_matrix(const Tensor<T>& kernel) {
    detail::check_kernel(kernel);
    int k = kernel.dim(0);
    auto coef = detail::moment_coefficients<T>(k);
    MomentMatrix<T> m(k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
            T s = T(0);
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                    s += coef[((static_cast<size_t>(a) * k + b) * k + i) * k + j] *
                         kernel.data[static_cast<size_t>(i) * k + j];
            m.at(a, b) = s;
        }
    return m;
}

/// Moment pattern of the operator d^{a+b}/dx^a dy^b: 1 at (a,b), 0 elsewhere.
template <typename T>
MomentMatrix<T> target_moment(int a, int b, int k) {
    if (k < 3 || k % 2 == 0) throw std::invalid_argument("target_moment: bad kernel size");
    if (a < 0 || a >= k || b < 0 || b >= k)
        throw std::invalid_argument("target_moment: derivative orders out of range");
    MomentMatrix<T> m(k);
    m.at(a, b) = T(1);
    return m;
}

/// The trainable operator bank: one k x k kernel per derivative pair in
/// `layout`, each constrained toward its target moment pattern.
/// moment_max_order < 0 constrains the full k x k moment matrix; otherwise
/// only entries with a+b <= moment_max_order.
template <typename T>
struct KernelBank {
    Var<T> kernels;  // [K,k,k]
    std::vector<std::pair<int, int>> layout;
    int kernel_size = 0;
    int moment_max_order = -1;

    KernelBank() = default;

    KernelBank(ParamStore<T>& ps, const std::string& name,
               std::vector<std::pair<int, int>> layout_, int k, Rng& rng, double init_std = 0.02,
               int max_order = -1)
        : layout(std::move(layout_)), kernel_size(k), moment_max_order(max_order) {
        if (k < 3 || k % 2 == 0) throw std::invalid_argument("KernelBank: bad kernel size");
        for (auto [a, b] : layout)
            if (a < 0 || a >= k || b < 0 || b >= k)
                throw std::invalid_argument("KernelBank: layout order out of range");
        Tensor<T> init({static_cast<int>(layout.size()), k, k});
        for (auto& v : init.data) v = static_cast<T>(rng.normal() * init_std);
        kernels = ps.add(name + "/kernels", std::move(init));
    }

    int count() const { return static_cast<int>(layout.size()); }

    Tensor<T> kernel(int idx) const {
        int k = kernel_size;
        Tensor<T> out({k, k});
        std::copy(kernels->value.data.begin() + static_cast<size_t>(idx) * k * k,
                  kernels->value.data.begin() + static_cast<size_t>(idx + 1) * k * k,
                  out.data.begin());
        return out;
    }

    MomentMatrix<T> target(int idx) const {
        return target_moment<T>(layout[idx].first, layout[idx].second, kernel_size);
    }

    bool constrained(int a, int b) const {
        return moment_max_order < 0 || a + b <= moment_max_order;
    }
};

/// Default operator set spanning advection/diffusion terms:
/// identity, first derivatives, pure and mixed second derivatives.
inline std::vector<std::pair<int, int>> default_bank_layout() {
    return {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}, {1, 1}};
}

/// sum_k || M(W_k) - M_target_k ||_F^2 over the constrained entries,
/// differentiable in every kernel entry.
template <typename T>
Var<T> kernel_moment_loss(const KernelBank<T>& bank) {
    int k = bank.kernel_size;
    int K = bank.count();
    auto coef = detail::moment_coefficients<T>(k);
    Var<T> kern = bank.kernels;

    // residuals per kernel per constrained (a,b)
    T loss = T(0);
    Tensor<T> resid({K, k, k});
    for (int q = 0; q < K; ++q) {
        auto tgt = bank.target(q);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
                if (!bank.constrained(a, b)) continue;
                T m = T(0);
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j)
                        m += coef[((static_cast<size_t>(a) * k + b) * k + i) * k + j] *
                             kern->value.at3(q, i, j);
                T r = m - tgt.at(a, b);
                resid.at3(q, a, b) = r;
                loss += r * r;
            }
    }
    int max_order = bank.moment_max_order;
    auto constrained = [max_order](int a, int b) { return max_order < 0 || a + b <= max_order; };
    return detail::make_op<T>(
        Tensor<T>::scalar(loss), {kern},
        [kern, resid = std::move(resid), coef = std::move(coef), K, k, constrained](Node<T>& n) {
            kern->ensure_grad();
            T g = n.grad[0];
            for (int q = 0; q < K; ++q)
                for (int a = 0; a < k; ++a)
                    for (int b = 0; b < k; ++b) {
                        if (!constrained(a, b)) continue;
                        T w = T(2) * g * resid.at3(q, a, b);
                        if (w == T(0)) continue;
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j)
                                kern->grad.at3(q, i, j) +=
                                    w * coef[((static_cast<size_t>(a) * k + b) * k + i) * k + j];
                    }
        });
}

/// Correlation of a single-channel field with every kernel in the bank,
/// replicate padding, shape preserved.
template <typename T>
std::vector<Tensor<T>> apply_operator_bank(const Tensor<T>& field, const KernelBank<T>& bank) {
    if (field.rank() != 2) throw std::invalid_argument("apply_operator_bank: field must be 2-D");
    int H = field.dim(0), W = field.dim(1), k = bank.kernel_size;
    if (H < k || W < k)
        throw std::invalid_argument("apply_operator_bank: field smaller than kernel");
    int r = k / 2;
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    std::vector<Tensor<T>> out;
    for (int q = 0; q < bank.count(); ++q) {
        Tensor<T> resp({H, W});
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                T s = T(0);
                for (int i = 0; i < k; ++i) {
                    int ih = clampi(h + i - r, 0, H - 1);
                    for (int j = 0; j < k; ++j) {
                        int iw = clampi(w + j - r, 0, W - 1);
                        s += bank.kernels->value.at3(q, i, j) * field.data[ih * W + iw];
                    }
                }
                resp.data[h * W + w] = s;
            }
        out.push_back(std::move(resp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// analytic-field oracle
// ---------------------------------------------------------------------------

enum class AnalyticFieldId { GaussianBump, Sinusoid, Polynomial };

/// Closed-form 2-D test field. Gaussian: exp(-((x-cx)^2+(y-cy)^2)/(2 sigma^2)).
/// Sinusoid: amp * sin(wx*x + wy*y + phase). Polynomial: amp * x^px * y^py.
struct AnalyticField {
    AnalyticFieldId id = AnalyticFieldId::GaussianBump;
    double cx = 0, cy = 0, sigma = 1;  // gaussian
    double wx = 1, wy = 0, phase = 0;  // sinusoid
    int px = 0, py = 0;                // polynomial
    double amp = 1;
};

struct GridSpec {
    int h = 0, w = 0;
    double x0 = 0, y0 = 0;
    double dx = 1, dy = 1;
};

namespace detail {

/// Probabilists' Hermite polynomial He_n(z).
inline double hermite(int n, double z) {
    double h0 = 1.0, h1 = z;
    if (n == 0) return h0;
    if (n == 1) return h1;
    for (int i = 1; i < n; ++i) {
        double h2 = z * h1 - i * h0;
        h0 = h1;
        h1 = h2;
    }
    return h1;
}

inline double analytic_derivative(const AnalyticField& f, int a, int b, double x, double y) {
    switch (f.id) {
        case AnalyticFieldId::GaussianBump: {
            double zx = (x - f.cx) / f.sigma, zy = (y - f.cy) / f.sigma;
            double sign = ((a + b) % 2 == 0) ? 1.0 : -1.0;
            return f.amp * sign * std::pow(f.sigma, -(a + b)) * hermite(a, zx) * hermite(b, zy) *
                   std::exp(-0.5 * (zx * zx + zy * zy));
        }
        case AnalyticFieldId::Sinusoid: {
            double arg = f.wx * x + f.wy * y + f.phase + (a + b) * 1.5707963267948966;
            return f.amp * std::pow(f.wx, a) * std::pow(f.wy, b) * std::sin(arg);
        }
        case AnalyticFieldId::Polynomial: {
            if (a > f.px || b > f.py) return 0.0;
            double c = f.amp;
            for (int i = 0; i < a; ++i) c *= f.px - i;
            for (int i = 0; i < b; ++i) c *= f.py - i;
            return c * std::pow(x, f.px - a) * std::pow(y, f.py - b);
        }
    }
    throw std::invalid_argument("derivative_oracle: unknown field id");
}

}  // namespace detail

/// Exact analytic d^{a+b} f / dx^a dy^b sampled on the grid (row i -> y,
/// column j -> x).
template <typename T>
Tensor<T> derivative_oracle(const AnalyticField& f, int a, int b, const GridSpec& grid) {
    if (a < 0 || b < 0) throw std::invalid_argument("derivative_oracle: negative order");
    Tensor<T> out({grid.h, grid.w});
    for (int i = 0; i < grid.h; ++i)
        for (int j = 0; j < grid.w; ++j)
            out.data[static_cast<size_t>(i) * grid.w + j] = static_cast<T>(
                detail::analytic_derivative(f, a, b, grid.x0 + j * grid.dx, grid.y0 + i * grid.dy));
    return out;
}

/// Samples the field itself on the grid.
template <typename T>
Tensor<T> sample_field(const AnalyticField& f, const GridSpec& grid) {
    return derivative_oracle<T>(f, 0, 0, grid);
}

/// Central-difference stencil for d^{a+b}/dx^a dy^b (a,b <= 2) embedded in a
/// k x k kernel: outer product of the 1-D stencils, centered.
template <typename T>
Tensor<T> embedded_central_difference_kernel(int a, int b, int k) {
    if (a > 2 || b > 2 || a < 0 || b < 0)
        throw std::invalid_argument("embedded_central_difference_kernel: orders up to 2 only");
    if (k < 3 || k % 2 == 0) throw std::invalid_argument("bad kernel size");
    auto stencil = [](int n) -> std::vector<double> {
        if (n == 0) return {0, 1, 0};
        if (n == 1) return {-0.5, 0, 0.5};
        return {1, -2, 1};
    };
    auto sx = stencil(a), sy = stencil(b);
    int r = k / 2;
    Tensor<T> kern({k, k});
    for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du)
            kern.data[static_cast<size_t>(r + dv) * k + (r + du)] =
                static_cast<T>(sy[dv + 1] * sx[du + 1]);
    return kern;
}

/// Minimizes the kernel moment loss alone by conjugate-gradient descent.
/// The loss is exactly quadratic in the kernel entries, so the step size
/// along each search direction can be solved in closed form from two loss
/// evaluations, and Polak-Ribiere directions make the badly conditioned
/// moment system converge in a few hundred iterations. Returns final loss.
template <typename T>
T train_bank_moments(KernelBank<T>& bank, int steps, T fallback_step = T(1e-3),
                     T stop_below = T(1e-14)) {
    auto& w = bank.kernels->value;
    int64_t n = w.size();

    auto eval_grad = [&](std::vector<T>& g) {
        bank.kernels->zero_grad();
        auto l = kernel_moment_loss(bank);
        backward(l);
        g.assign(bank.kernels->grad.data.begin(), bank.kernels->grad.data.end());
        return value_of(l);
    };
    auto eval_at = [&](const std::vector<T>& base, const std::vector<T>& dir, T alpha) {
        for (int64_t i = 0; i < n; ++i) w.data[i] = base[i] + alpha * dir[i];
        return value_of(kernel_moment_loss(bank));
    };

    std::vector<T> g(n), g_prev(n), d(n), base(n);
    T loss = eval_grad(g);
    for (int64_t i = 0; i < n; ++i) d[i] = -g[i];
    for (int it = 0; it < steps && loss > stop_below; ++it) {
        base.assign(w.data.begin(), w.data.end());
        T slope = T(0);
        for (int64_t i = 0; i < n; ++i) slope += g[i] * d[i];
        if (slope >= T(0)) {  // stale direction: restart along steepest descent
            for (int64_t i = 0; i < n; ++i) d[i] = -g[i];
            slope = T(0);
            for (int64_t i = 0; i < n; ++i) slope += g[i] * d[i];
        }
        // phi(a) = loss + a*slope + a^2/2 * curv  (exact for a quadratic loss)
        T curv = T(2) * (eval_at(base, d, T(1)) - loss - slope);
        T alpha = curv > T(0) ? -slope / curv : fallback_step;
        T trial = eval_at(base, d, alpha);
        if (!(trial <= loss)) {  // numerical guard near machine precision
            for (int64_t i = 0; i < n; ++i) w.data[i] = base[i];
            break;
        }
        g_prev.swap(g);
        loss = eval_grad(g);
        T num = T(0), den = T(0);
        for (int64_t i = 0; i < n; ++i) {
            num += g[i] * (g[i] - g_prev[i]);  // Polak-Ribiere
            den += g_prev[i] * g_prev[i];
        }
        T beta = den > T(0) ? std::max(T(0), num / den) : T(0);
        for (int64_t i = 0; i < n; ++i) d[i] = -g[i] + beta * d[i];
    }
    return value_of(kernel_moment_loss(bank));
}

}  // namespace pestgan
