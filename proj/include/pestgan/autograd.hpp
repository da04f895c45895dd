#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "pestgan/tensor.hpp"

namespace pestgan {

/// Reverse-mode autodiff node. Graphs are built dynamically; leaves
/// (parameters, constants) persist across steps, intermediates die with
/// the last Var referencing them.
template <typename T>
class Node {
   public:
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // accumulates this->grad into parents

    void ensure_grad() {
        if (grad.data.empty()) grad = Tensor<T>::zeros(value.shape);
    }
    void zero_grad() {
        if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), T(0));
    }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return n;
}

template <typename T>
Var<T> constant_scalar(T v) {
    return constant(Tensor<T>::scalar(v));
}

/// Trainable leaf.
template <typename T>
Var<T> leaf(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

template <typename T>
Var<T> detach(const Var<T>& v) {
    return constant(v->value);
}

namespace detail {

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    for (auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

}  // namespace detail

/// Runs reverse-mode accumulation from a scalar root. Leaf grads are
/// accumulated (call zero_grad on parameters between phases).
template <typename T>
void backward(const Var<T>& root) {
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be a scalar");
    if (!root->requires_grad) return;

    // iterative post-order topo sort
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.data[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return detail::make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i];
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "sub");
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return detail::make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return detail::make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int64_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
        }
    });
}

/// y = s*x + c elementwise with scalar constants.
template <typename T>
Var<T> affine(const Var<T>& a, T s, T c) {
    Tensor<T> out = a->value;
    for (auto& v : out.data) v = s * v + c;
    return detail::make_op<T>(std::move(out), {a}, [a, s](Node<T>& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += s * n.grad[i];
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    return affine(a, s, T(0));
}

template <typename T>
Var<T> neg(const Var<T>& a) {
    return affine(a, T(-1), T(0));
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            T y = n.value[i];
            a->grad[i] += n.grad[i] * y * (T(1) - y);
        }
    });
}

template <typename T>
Var<T> tanh_op(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (auto& v : out.data) v = std::tanh(v);
    return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            T y = n.value[i];
            a->grad[i] += n.grad[i] * (T(1) - y * y);
        }
    });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
    Tensor<T> out = a->value;
    for (auto& v : out.data) v = v > T(0) ? v : slope * v;
    return detail::make_op<T>(std::move(out), {a}, [a, slope](Node<T>& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            a->grad[i] += n.grad[i] * (a->value[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    return leaky_relu(a, T(0));
}

template <typename T>
Var<T> square(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (auto& v : out.data) v = v * v;
    return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            a->grad[i] += n.grad[i] * T(2) * a->value[i];
    });
}

/// |x|, with subgradient 0 at the origin.
template <typename T>
Var<T> abs_op(const Var<T>& a) {
    Tensor<T> out = a->value;
    for (auto& v : out.data) v = std::abs(v);
    return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            T x = a->value[i];
            a->grad[i] += n.grad[i] * (x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)));
        }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& a) {
    T s = T(0);
    for (const T& v : a->value.data) s += v;
    return detail::make_op<T>(Tensor<T>::scalar(s), {a}, [a](Node<T>& n) {
        a->ensure_grad();
        T g = n.grad[0];
        for (int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a->value.size()));
}

/// x - mean(x); backward subtracts the mean of the incoming gradient.
template <typename T>
Var<T> center(const Var<T>& a) {
    T m = T(0);
    for (const T& v : a->value.data) m += v;
    m /= static_cast<T>(a->value.size());
    Tensor<T> out = a->value;
    for (auto& v : out.data) v -= m;
    return detail::make_op<T>(std::move(out), {a}, [a](Node<T>& n) {
        a->ensure_grad();
        T gm = T(0);
        for (int64_t i = 0; i < n.grad.size(); ++i) gm += n.grad[i];
        gm /= static_cast<T>(n.grad.size());
        for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] - gm;
    });
}

/// Population variance over all elements.
template <typename T>
Var<T> variance(const Var<T>& a) {
    return mean(square(center(a)));
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
    return mean(abs_op(sub(a, b)));
}

template <typename T>
Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b) {
    return mean(square(sub(a, b)));
}

template <typename T>
T value_of(const Var<T>& v) {
    if (v->value.size() != 1) throw std::invalid_argument("value_of: not a scalar");
    return v->value[0];
}

// ---------------------------------------------------------------------------
// shape ops (rank-3 [C,H,W])
// ---------------------------------------------------------------------------

template <typename T>
Var<T> concat_ch(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_ch: empty");
    int H = parts[0]->value.dim(1), W = parts[0]->value.dim(2);
    int C = 0;
    for (auto& p : parts) {
        if (p->value.rank() != 3 || p->value.dim(1) != H || p->value.dim(2) != W)
            throw std::invalid_argument("concat_ch: incompatible shapes");
        C += p->value.dim(0);
    }
    Tensor<T> out({C, H, W});
    int64_t off = 0;
    for (auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
        off += p->value.size();
    }
    return detail::make_op<T>(std::move(out), parts, [parts](Node<T>& n) {
        int64_t off = 0;
        for (auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] += n.grad[off + i];
            }
            off += p->value.size();
        }
    });
}

template <typename T>
Var<T> slice_ch(const Var<T>& a, int c0, int c1) {
    if (a->value.rank() != 3 || c0 < 0 || c1 > a->value.dim(0) || c0 >= c1)
        throw std::invalid_argument("slice_ch: bad range");
    int H = a->value.dim(1), W = a->value.dim(2);
    int64_t plane = static_cast<int64_t>(H) * W;
    Tensor<T> out({c1 - c0, H, W});
    std::copy(a->value.data.begin() + c0 * plane, a->value.data.begin() + c1 * plane,
              out.data.begin());
    return detail::make_op<T>(std::move(out), {a}, [a, c0, plane](Node<T>& n) {
        a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[c0 * plane + i] += n.grad[i];
    });
}

/// Nearest-neighbor upsampling by an integer factor; each source pixel
/// becomes a factor x factor block.
template <typename T>
Var<T> upsample_nn(const Var<T>& a, int factor) {
    if (a->value.rank() != 3) throw std::invalid_argument("upsample_nn: rank-3 input required");
    int C = a->value.dim(0), H = a->value.dim(1), W = a->value.dim(2);
    if (H < 1 || W < 1 || factor < 1) throw std::invalid_argument("upsample_nn: non-positive dims");
    Tensor<T> out({C, H * factor, W * factor});
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H * factor; ++h)
            for (int w = 0; w < W * factor; ++w)
                out.at3(c, h, w) = a->value.at3(c, h / factor, w / factor);
    return detail::make_op<T>(std::move(out), {a}, [a, factor](Node<T>& n) {
        a->ensure_grad();
        int C = a->value.dim(0), H = a->value.dim(1), W = a->value.dim(2);
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H * factor; ++h)
                for (int w = 0; w < W * factor; ++w)
                    a->grad.at3(c, h / factor, w / factor) += n.grad.at3(c, h, w);
    });
}

// ---------------------------------------------------------------------------
// convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// col[(c,i,j), (oh,ow)] = img[c, oh*s-p+i, ow*s-p+j], zero outside.
template <typename T>
void im2col(const Tensor<T>& img, int k, int s, int p, int OH, int OW, MatRM<T>& col) {
    int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    col.resize(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(OH) * OW);
    col.setZero();
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                Eigen::Index row = (static_cast<Eigen::Index>(c) * k + i) * k + j;
                for (int oh = 0; oh < OH; ++oh) {
                    int ih = oh * s - p + i;
                    if (ih < 0 || ih >= H) continue;
                    for (int ow = 0; ow < OW; ++ow) {
                        int iw = ow * s - p + j;
                        if (iw < 0 || iw >= W) continue;
                        col(row, static_cast<Eigen::Index>(oh) * OW + ow) = img.at3(c, ih, iw);
                    }
                }
            }
}

/// Transpose scatter of im2col: img[c, oh*s-p+i, ow*s-p+j] += col[...].
template <typename T>
void col2im_add(const MatRM<T>& col, int k, int s, int p, int OH, int OW, Tensor<T>& img) {
    int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                Eigen::Index row = (static_cast<Eigen::Index>(c) * k + i) * k + j;
                for (int oh = 0; oh < OH; ++oh) {
                    int ih = oh * s - p + i;
                    if (ih < 0 || ih >= H) continue;
                    for (int ow = 0; ow < OW; ++ow) {
                        int iw = ow * s - p + j;
                        if (iw < 0 || iw >= W) continue;
                        img.at3(c, ih, iw) += col(row, static_cast<Eigen::Index>(oh) * OW + ow);
                    }
                }
            }
}

}  // namespace detail

/// 2-D correlation, zero padding. x: [Ci,H,W], w: [Co,Ci,k,k], b: [Co] or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    using detail::MatRM;
    if (x->value.rank() != 3 || w->value.rank() != 4)
        throw std::invalid_argument("conv2d: bad ranks");
    int Ci = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    int Co = w->value.dim(0), k = w->value.dim(2);
    if (w->value.dim(1) != Ci || w->value.dim(3) != k)
        throw std::invalid_argument("conv2d: weight/input channel mismatch");
    int OH = (H + 2 * pad - k) / stride + 1;
    int OW = (W + 2 * pad - k) / stride + 1;
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: field smaller than kernel");

    MatRM<T> col;
    detail::im2col(x->value, k, stride, pad, OH, OW, col);
    Eigen::Map<const MatRM<T>> Wm(w->value.data.data(), Co, static_cast<Eigen::Index>(Ci) * k * k);
    Tensor<T> out({Co, OH, OW});
    Eigen::Map<MatRM<T>> Om(out.data.data(), Co, static_cast<Eigen::Index>(OH) * OW);
    Om.noalias() = Wm * col;
    if (b) {
        if (b->value.size() != Co) throw std::invalid_argument("conv2d: bias size mismatch");
        for (int co = 0; co < Co; ++co) {
            T bv = b->value[co];
            for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i)
                out.data[static_cast<size_t>(co) * OH * OW + i] += bv;
        }
    }

    std::vector<Var<T>> parents = {x, w};
    if (b) parents.push_back(b);
    return detail::make_op<T>(
        std::move(out), std::move(parents),
        [x, w, b, stride, pad, Ci, Co, k, OH, OW](Node<T>& n) {
            Eigen::Map<const MatRM<T>> Gm(n.grad.data.data(), Co,
                                          static_cast<Eigen::Index>(OH) * OW);
            if (w->requires_grad) {
                w->ensure_grad();
                MatRM<T> col;
                detail::im2col(x->value, k, stride, pad, OH, OW, col);
                Eigen::Map<MatRM<T>> GW(w->grad.data.data(), Co,
                                        static_cast<Eigen::Index>(Ci) * k * k);
                GW.noalias() += Gm * col.transpose();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                Eigen::Map<const MatRM<T>> Wm(w->value.data.data(), Co,
                                              static_cast<Eigen::Index>(Ci) * k * k);
                MatRM<T> colg = Wm.transpose() * Gm;
                detail::col2im_add(colg, k, stride, pad, OH, OW, x->grad);
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                for (int co = 0; co < Co; ++co) {
                    T s = T(0);
                    for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i)
                        s += n.grad.data[static_cast<size_t>(co) * OH * OW + i];
                    b->grad[co] += s;
                }
            }
        });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::nullptr_t, int stride, int pad) {
    return conv2d(x, w, Var<T>{}, stride, pad);
}

/// Transposed convolution. x: [Ci,H,W], w: [Ci,Co,k,k], output
/// [(H-1)*stride - 2*pad + k] square semantics.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    using detail::MatRM;
    if (x->value.rank() != 3 || w->value.rank() != 4)
        throw std::invalid_argument("conv_transpose2d: bad ranks");
    int Ci = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    int Co = w->value.dim(1), k = w->value.dim(2);
    if (w->value.dim(0) != Ci || w->value.dim(3) != k)
        throw std::invalid_argument("conv_transpose2d: weight/input channel mismatch");
    int OH = (H - 1) * stride - 2 * pad + k;
    int OW = (W - 1) * stride - 2 * pad + k;
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv_transpose2d: degenerate output");

    // out = col2im( W^T * x ) where W maps [Ci] -> [Co*k*k]
    Eigen::Map<const MatRM<T>> Wm(w->value.data.data(), Ci, static_cast<Eigen::Index>(Co) * k * k);
    Eigen::Map<const MatRM<T>> Xm(x->value.data.data(), Ci, static_cast<Eigen::Index>(H) * W);
    MatRM<T> colg = Wm.transpose() * Xm;  // [Co*k*k, H*W]
    Tensor<T> out({Co, OH, OW});
    detail::col2im_add(colg, k, stride, pad, H, W, out);
    if (b) {
        if (b->value.size() != Co) throw std::invalid_argument("conv_transpose2d: bias mismatch");
        for (int co = 0; co < Co; ++co) {
            T bv = b->value[co];
            for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i)
                out.data[static_cast<size_t>(co) * OH * OW + i] += bv;
        }
    }

    std::vector<Var<T>> parents = {x, w};
    if (b) parents.push_back(b);
    return detail::make_op<T>(
        std::move(out), std::move(parents),
        [x, w, b, stride, pad, Ci, Co, k, H, W, OH, OW](Node<T>& n) {
            MatRM<T> gcol;  // im2col of output gradient over input grid positions
            detail::im2col(n.grad, k, stride, pad, H, W, gcol);  // [Co*k*k, H*W]
            if (x->requires_grad) {
                x->ensure_grad();
                Eigen::Map<const MatRM<T>> Wm(w->value.data.data(), Ci,
                                              static_cast<Eigen::Index>(Co) * k * k);
                Eigen::Map<MatRM<T>> GX(x->grad.data.data(), Ci, static_cast<Eigen::Index>(H) * W);
                GX.noalias() += Wm * gcol;
            }
            if (w->requires_grad) {
                w->ensure_grad();
                Eigen::Map<const MatRM<T>> Xm(x->value.data.data(), Ci,
                                              static_cast<Eigen::Index>(H) * W);
                Eigen::Map<MatRM<T>> GW(w->grad.data.data(), Ci,
                                        static_cast<Eigen::Index>(Co) * k * k);
                GW.noalias() += Xm * gcol.transpose();
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                for (int co = 0; co < Co; ++co) {
                    T s = T(0);
                    for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i)
                        s += n.grad.data[static_cast<size_t>(co) * OH * OW + i];
                    b->grad[co] += s;
                }
            }
        });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, std::nullptr_t, int stride, int pad) {
    return conv_transpose2d(x, w, Var<T>{}, stride, pad);
}

/// Applies every kernel in a bank [K,k,k] to every channel of x [C,H,W]
/// as 2-D correlation with replicate (edge-clamp) padding; output
/// [K*C,H,W] ordered kernel-major.
template <typename T>
Var<T> depthwise_bank(const Var<T>& x, const Var<T>& kernels) {
    if (x->value.rank() != 3 || kernels->value.rank() != 3)
        throw std::invalid_argument("depthwise_bank: bad ranks");
    int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    int K = kernels->value.dim(0), k = kernels->value.dim(1);
    if (kernels->value.dim(2) != k || k % 2 == 0)
        throw std::invalid_argument("depthwise_bank: kernels must be square with odd side");
    if (H < k || W < k) throw std::invalid_argument("depthwise_bank: field smaller than kernel");
    int r = k / 2;
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    Tensor<T> out({K * C, H, W});
    for (int q = 0; q < K; ++q)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    T s = T(0);
                    for (int i = 0; i < k; ++i) {
                        int ih = clampi(h + i - r, 0, H - 1);
                        for (int j = 0; j < k; ++j) {
                            int iw = clampi(w + j - r, 0, W - 1);
                            s += kernels->value.at3(q, i, j) * x->value.at3(c, ih, iw);
                        }
                    }
                    out.at3(q * C + c, h, w) = s;
                }
    return detail::make_op<T>(std::move(out), {x, kernels}, [x, kernels, C, H, W, K, k,
                                                             r](Node<T>& n) {
        auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
        if (x->requires_grad) x->ensure_grad();
        if (kernels->requires_grad) kernels->ensure_grad();
        for (int q = 0; q < K; ++q)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        T g = n.grad.at3(q * C + c, h, w);
                        if (g == T(0)) continue;
                        for (int i = 0; i < k; ++i) {
                            int ih = clampi(h + i - r, 0, H - 1);
                            for (int j = 0; j < k; ++j) {
                                int iw = clampi(w + j - r, 0, W - 1);
                                if (x->requires_grad)
                                    x->grad.at3(c, ih, iw) += g * kernels->value.at3(q, i, j);
                                if (kernels->requires_grad)
                                    kernels->grad.at3(q, i, j) += g * x->value.at3(c, ih, iw);
                            }
                        }
                    }
    });
}

}  // namespace pestgan
