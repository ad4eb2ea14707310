#pragma once

#include <cmath>
#include <cstdlib>
#include <functional>
#include <utility>
#include <vector>

#include "c2p/errors.hpp"
#include "c2p/tensor.hpp"

namespace c2p::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Tensor& val() const;
    const Tensor& grad() const;
    bool requires_grad() const;
    int id() const { return id_; }
    Tape* tape() const { return tape_; }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Reverse-mode tape. Nodes are appended in forward order; backward() walks
// them in reverse. Values stay alive for the lifetime of the tape so backward
// closures can read them by id.
class Tape {
public:
    int next_id() const { return static_cast<int>(nodes_.size()); }

    Var emplace(Tensor value, bool requires_grad, std::function<void(Tape&)> back = {}) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var(this, static_cast<int>(nodes_.size()) - 1);
    }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    bool grad_touched(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.shape.empty(); }

    // Lazily allocated, zero-initialized gradient buffer.
    Tensor& grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.shape.empty()) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    // requires_grad node that `loss` depends on.
    void backward(const Var& loss) {
        if (loss.tape() != this) throw InvalidInputError("backward: var from another tape");
        if (value(loss.id()).numel() != 1) throw InvalidInputError("backward: loss must be scalar");
        if (!requires_grad(loss.id())) return;
        grad(loss.id()).data[0] += 1.0;
        for (int i = loss.id(); i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.requires_grad && n.back && !n.grad.shape.empty()) n.back(*this);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad; // empty until touched
        bool requires_grad = false;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;
};

inline const Tensor& Var::val() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return const_cast<Tape*>(tape_)->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

inline Var constant(Tape& t, Tensor v) { return t.emplace(std::move(v), false); }

inline Var param(Tape& t, const Tensor& v, bool trainable = true) { return t.emplace(v, trainable); }

inline double scalar(const Var& v) {
    if (v.val().numel() != 1) throw InvalidInputError("scalar: var is not scalar");
    return v.val().data[0];
}

// ---- elementwise -----------------------------------------------------------

inline Var relu(Var x) {
    Tape& t = *x.tape();
    Tensor out = x.val();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        const Tensor& xv = tp.value(xid);
        Tensor& gx = tp.grad(xid);
        for (long i = 0; i < gy.numel(); ++i)
            if (xv[i] > 0.0) gx[i] += gy[i];
    });
}

inline Var sigmoid(Var x) {
    Tape& t = *x.tape();
    Tensor out = x.val();
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        const Tensor& yv = tp.value(yid);
        Tensor& gx = tp.grad(xid);
        for (long i = 0; i < gy.numel(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
    });
}

// Clamp to [0,1]; gradient passes only strictly inside the interval.
inline Var clamp01(Var x) {
    Tape& t = *x.tape();
    Tensor out = x.val();
    for (double& v : out.data) v = c2p::clamp01(v);
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        const Tensor& xv = tp.value(xid);
        Tensor& gx = tp.grad(xid);
        for (long i = 0; i < gy.numel(); ++i)
            if (xv[i] > 0.0 && xv[i] < 1.0) gx[i] += gy[i];
    });
}

inline Var add(Var a, Var b) {
    Tape& t = *a.tape();
    if (!a.val().same_shape(b.val())) throw InvalidInputError("add: shape mismatch");
    Tensor out = a.val();
    for (long i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
    const bool req = a.requires_grad() || b.requires_grad();
    if (!req) return t.emplace(std::move(out), false);
    const int aid = a.id(), bid = b.id(), yid = t.next_id();
    const bool ra = a.requires_grad(), rb = b.requires_grad();
    return t.emplace(std::move(out), true, [aid, bid, yid, ra, rb](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        if (ra) {
            Tensor& ga = tp.grad(aid);
            for (long i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
        }
        if (rb) {
            Tensor& gb = tp.grad(bid);
            for (long i = 0; i < gy.numel(); ++i) gb[i] += gy[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    Tape& t = *a.tape();
    if (!a.val().same_shape(b.val())) throw InvalidInputError("sub: shape mismatch");
    Tensor out = a.val();
    for (long i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
    const bool req = a.requires_grad() || b.requires_grad();
    if (!req) return t.emplace(std::move(out), false);
    const int aid = a.id(), bid = b.id(), yid = t.next_id();
    const bool ra = a.requires_grad(), rb = b.requires_grad();
    return t.emplace(std::move(out), true, [aid, bid, yid, ra, rb](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        if (ra) {
            Tensor& ga = tp.grad(aid);
            for (long i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
        }
        if (rb) {
            Tensor& gb = tp.grad(bid);
            for (long i = 0; i < gy.numel(); ++i) gb[i] -= gy[i];
        }
    });
}

// Elementwise product. `b` may either match `a`'s shape or be a per-channel
// {C,1,1} tensor broadcast over a {C,H,W} `a`.
inline Var mul(Var a, Var b) {
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    const bool bcast = !av.same_shape(bv);
    if (bcast) {
        const bool ok = av.rank() == 3 && bv.rank() == 3 && bv.shape[0] == av.shape[0] &&
                        bv.shape[1] == 1 && bv.shape[2] == 1;
        if (!ok) throw InvalidInputError("mul: incompatible shapes");
    }
    const int C = av.rank() == 3 ? av.shape[0] : 1;
    const long plane = av.numel() / C;
    Tensor out = av;
    if (bcast) {
        for (int c = 0; c < C; ++c)
            for (long i = 0; i < plane; ++i) out[c * plane + i] *= bv[c];
    } else {
        for (long i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    }
    const bool req = a.requires_grad() || b.requires_grad();
    if (!req) return t.emplace(std::move(out), false);
    const int aid = a.id(), bid = b.id(), yid = t.next_id();
    const bool ra = a.requires_grad(), rb = b.requires_grad();
    return t.emplace(std::move(out), true, [aid, bid, yid, ra, rb, bcast, C, plane](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        const Tensor& av2 = tp.value(aid);
        const Tensor& bv2 = tp.value(bid);
        if (ra) {
            Tensor& ga = tp.grad(aid);
            if (bcast) {
                for (int c = 0; c < C; ++c)
                    for (long i = 0; i < plane; ++i) ga[c * plane + i] += gy[c * plane + i] * bv2[c];
            } else {
                for (long i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * bv2[i];
            }
        }
        if (rb) {
            Tensor& gb = tp.grad(bid);
            if (bcast) {
                for (int c = 0; c < C; ++c) {
                    double s = 0.0;
                    for (long i = 0; i < plane; ++i) s += gy[c * plane + i] * av2[c * plane + i];
                    gb[c] += s;
                }
            } else {
                for (long i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * av2[i];
            }
        }
    });
}

// Elementwise quotient (used on scalar loss terms).
inline Var divide(Var a, Var b) {
    Tape& t = *a.tape();
    if (!a.val().same_shape(b.val())) throw InvalidInputError("divide: shape mismatch");
    Tensor out = a.val();
    for (long i = 0; i < out.numel(); ++i) out[i] /= b.val()[i];
    const bool req = a.requires_grad() || b.requires_grad();
    if (!req) return t.emplace(std::move(out), false);
    const int aid = a.id(), bid = b.id(), yid = t.next_id();
    const bool ra = a.requires_grad(), rb = b.requires_grad();
    return t.emplace(std::move(out), true, [aid, bid, yid, ra, rb](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        const Tensor& av2 = tp.value(aid);
        const Tensor& bv2 = tp.value(bid);
        if (ra) {
            Tensor& ga = tp.grad(aid);
            for (long i = 0; i < gy.numel(); ++i) ga[i] += gy[i] / bv2[i];
        }
        if (rb) {
            Tensor& gb = tp.grad(bid);
            for (long i = 0; i < gy.numel(); ++i) gb[i] -= gy[i] * av2[i] / (bv2[i] * bv2[i]);
        }
    });
}

inline Var scale(Var x, double k) {
    Tape& t = *x.tape();
    Tensor out = x.val();
    for (double& v : out.data) v *= k;
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid, k](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        Tensor& gx = tp.grad(xid);
        for (long i = 0; i < gy.numel(); ++i) gx[i] += gy[i] * k;
    });
}

inline Var offset(Var x, double k) {
    Tape& t = *x.tape();
    Tensor out = x.val();
    for (double& v : out.data) v += k;
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        Tensor& gx = tp.grad(xid);
        for (long i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
    });
}

inline Var one_minus(Var x) { return offset(scale(x, -1.0), 1.0); }

// ---- reductions and shape ops ----------------------------------------------

// Per-channel spatial mean: {C,H,W} -> {C,1,1}.
inline Var gap(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw InvalidInputError("gap: expected {C,H,W}");
    const int C = xv.shape[0];
    const long plane = static_cast<long>(xv.shape[1]) * xv.shape[2];
    Tensor out({C, 1, 1});
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (long i = 0; i < plane; ++i) s += xv[c * plane + i];
        out[c] = s / static_cast<double>(plane);
    }
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid, C, plane](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        Tensor& gx = tp.grad(xid);
        for (int c = 0; c < C; ++c) {
            const double g = gy[c] / static_cast<double>(plane);
            for (long i = 0; i < plane; ++i) gx[c * plane + i] += g;
        }
    });
}

// Replicate {C,1,1} over the spatial grid: -> {C,H,W}.
inline Var tile_hw(Var x, int h, int w) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.rank() != 3 || xv.shape[1] != 1 || xv.shape[2] != 1)
        throw InvalidInputError("tile_hw: expected {C,1,1}");
    const int C = xv.shape[0];
    const long plane = static_cast<long>(h) * w;
    Tensor out({C, h, w});
    for (int c = 0; c < C; ++c)
        for (long i = 0; i < plane; ++i) out[c * plane + i] = xv[c];
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid, C, plane](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        Tensor& gx = tp.grad(xid);
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (long i = 0; i < plane; ++i) s += gy[c * plane + i];
            gx[c] += s;
        }
    });
}

inline Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw InvalidInputError("concat_channels: empty input");
    Tape& t = *xs[0].tape();
    const int h = xs[0].val().shape[1], w = xs[0].val().shape[2];
    int C = 0;
    bool req = false;
    for (const Var& x : xs) {
        const Tensor& v = x.val();
        if (v.rank() != 3 || v.shape[1] != h || v.shape[2] != w)
            throw InvalidInputError("concat_channels: spatial dims differ");
        C += v.shape[0];
        req = req || x.requires_grad();
    }
    Tensor out({C, h, w});
    long off = 0;
    for (const Var& x : xs) {
        const Tensor& v = x.val();
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
        off += v.numel();
    }
    if (!req) return t.emplace(std::move(out), false);
    std::vector<int> ids;
    std::vector<long> sizes;
    for (const Var& x : xs) {
        ids.push_back(x.id());
        sizes.push_back(x.val().numel());
    }
    const int yid = t.next_id();
    return t.emplace(std::move(out), true, [ids, sizes, yid](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        long off2 = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (tp.requires_grad(ids[k])) {
                Tensor& g = tp.grad(ids[k]);
                for (long i = 0; i < sizes[k]; ++i) g[i] += gy[off2 + i];
            }
            off2 += sizes[k];
        }
    });
}

// Mean absolute difference over all elements: -> scalar {1}.
inline Var l1_mean(Var a, Var b) {
    Tape& t = *a.tape();
    if (!a.val().same_shape(b.val())) throw InvalidInputError("l1_mean: shape mismatch");
    const long n = a.val().numel();
    double s = 0.0;
    for (long i = 0; i < n; ++i) s += std::abs(a.val()[i] - b.val()[i]);
    Tensor out({1});
    out[0] = s / static_cast<double>(n);
    const bool req = a.requires_grad() || b.requires_grad();
    if (!req) return t.emplace(std::move(out), false);
    const int aid = a.id(), bid = b.id(), yid = t.next_id();
    const bool ra = a.requires_grad(), rb = b.requires_grad();
    return t.emplace(std::move(out), true, [aid, bid, yid, ra, rb, n](Tape& tp) {
        const double g = tp.grad(yid)[0] / static_cast<double>(n);
        const Tensor& av2 = tp.value(aid);
        const Tensor& bv2 = tp.value(bid);
        Tensor* ga = ra ? &tp.grad(aid) : nullptr;
        Tensor* gb = rb ? &tp.grad(bid) : nullptr;
        for (long i = 0; i < n; ++i) {
            const double d = av2[i] - bv2[i];
            const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (ga) (*ga)[i] += g * sg;
            if (gb) (*gb)[i] -= g * sg;
        }
    });
}

// 2x2 max pooling, stride 2 (odd trailing row/col dropped).
inline Var maxpool2(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw InvalidInputError("maxpool2: expected {C,H,W}");
    const int C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
    const int Ho = H / 2, Wo = W / 2;
    if (Ho < 1 || Wo < 1) throw InvalidInputError("maxpool2: input too small");
    Tensor out({C, Ho, Wo});
    std::vector<long> arg(static_cast<std::size_t>(out.numel()));
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
            for (int x2 = 0; x2 < Wo; ++x2) {
                long best = (static_cast<long>(c) * H + 2 * y) * W + 2 * x2;
                double bv = xv[best];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const long idx = (static_cast<long>(c) * H + 2 * y + dy) * W + 2 * x2 + dx;
                        if (xv[idx] > bv) { bv = xv[idx]; best = idx; }
                    }
                const long oidx = (static_cast<long>(c) * Ho + y) * Wo + x2;
                out[oidx] = bv;
                arg[static_cast<std::size_t>(oidx)] = best;
            }
    if (!x.requires_grad()) return t.emplace(std::move(out), false);
    const int xid = x.id(), yid = t.next_id();
    return t.emplace(std::move(out), true, [xid, yid, arg](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        Tensor& gx = tp.grad(xid);
        for (long i = 0; i < gy.numel(); ++i) gx[arg[static_cast<std::size_t>(i)]] += gy[i];
    });
}

// ---- convolution ------------------------------------------------------------

// Mirror (reflect-101) index into [0,n). Degenerates to 0 for n == 1.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

namespace detail {

inline std::vector<int> pad_map(int n, int pad, bool reflect) {
    std::vector<int> m(static_cast<std::size_t>(n + 2 * pad));
    for (int i = 0; i < n + 2 * pad; ++i) {
        const int j = i - pad;
        m[static_cast<std::size_t>(i)] = reflect ? reflect_index(j, n) : (j < 0 || j >= n ? -1 : j);
    }
    return m;
}

} // namespace detail

// 2D convolution with square kernel, `pad = k/2`, configurable stride.
// x: {Cin,H,W}, w: {Cout,Cin,k,k}, b: {Cout}. Reflect padding by default;
// zero padding writes nothing for out-of-range taps.
inline Var conv2d(Var x, Var w, Var b, int stride = 1, bool reflect = true) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const Tensor& bv = b.val();
    if (xv.rank() != 3 || wv.rank() != 4) throw InvalidInputError("conv2d: bad ranks");
    const int Cin = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
    const int Cout = wv.shape[0], k = wv.shape[2];
    if (wv.shape[1] != Cin) throw ConfigError("conv2d: channel mismatch");
    if (wv.shape[3] != k || bv.numel() != Cout) throw ConfigError("conv2d: bad weight shape");
    const int pad = k / 2;
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    const auto my = detail::pad_map(H, pad, reflect);
    const auto mx = detail::pad_map(W, pad, reflect);

    Tensor out({Cout, Ho, Wo});
    const double* xd = xv.data.data();
    const double* wd = wv.data.data();
    double* od = out.data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < Cout; ++co) {
        double* oplane = od + static_cast<long>(co) * Ho * Wo;
        const double bias = bv[co];
        for (long i = 0; i < static_cast<long>(Ho) * Wo; ++i) oplane[i] = bias;
        for (int ci = 0; ci < Cin; ++ci) {
            const double* xplane = xd + static_cast<long>(ci) * H * W;
            const double* wk = wd + ((static_cast<long>(co) * Cin + ci) * k) * k;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double wval = wk[ky * k + kx];
                    if (wval == 0.0) continue;
                    for (int y = 0; y < Ho; ++y) {
                        const int iy = my[static_cast<std::size_t>(y * stride + ky)];
                        if (iy < 0) continue;
                        const double* xrow = xplane + static_cast<long>(iy) * W;
                        double* orow = oplane + static_cast<long>(y) * Wo;
                        for (int xo = 0; xo < Wo; ++xo) {
                            const int ix = mx[static_cast<std::size_t>(xo * stride + kx)];
                            if (ix >= 0) orow[xo] += wval * xrow[ix];
                        }
                    }
                }
        }
    }

    const bool rx = x.requires_grad(), rw = w.requires_grad(), rb2 = b.requires_grad();
    if (!rx && !rw && !rb2) return t.emplace(std::move(out), false);
    const int xid = x.id(), wid = w.id(), bid = b.id(), yid = t.next_id();
    return t.emplace(std::move(out), true,
                     [xid, wid, bid, yid, Cin, Cout, H, W, Ho, Wo, k, stride, my, mx, rx, rw,
                      rb2](Tape& tp) {
        const Tensor& gy = tp.grad(yid);
        const Tensor& xv2 = tp.value(xid);
        const Tensor& wv2 = tp.value(wid);
        const double* gyd = gy.data.data();
        if (rb2) {
            Tensor& gb = tp.grad(bid);
            for (int co = 0; co < Cout; ++co) {
                double s = 0.0;
                const double* gplane = gyd + static_cast<long>(co) * Ho * Wo;
                for (long i = 0; i < static_cast<long>(Ho) * Wo; ++i) s += gplane[i];
                gb[co] += s;
            }
        }
        if (rw) {
            Tensor& gw = tp.grad(wid);
            const double* xd2 = xv2.data.data();
            double* gwd = gw.data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int co = 0; co < Cout; ++co) {
                const double* gplane = gyd + static_cast<long>(co) * Ho * Wo;
                for (int ci = 0; ci < Cin; ++ci) {
                    const double* xplane = xd2 + static_cast<long>(ci) * H * W;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            double s = 0.0;
                            for (int y = 0; y < Ho; ++y) {
                                const int iy = my[static_cast<std::size_t>(y * stride + ky)];
                                if (iy < 0) continue;
                                const double* xrow = xplane + static_cast<long>(iy) * W;
                                const double* grow = gplane + static_cast<long>(y) * Wo;
                                for (int xo = 0; xo < Wo; ++xo) {
                                    const int ix = mx[static_cast<std::size_t>(xo * stride + kx)];
                                    if (ix >= 0) s += grow[xo] * xrow[ix];
                                }
                            }
                            gwd[((static_cast<long>(co) * Cin + ci) * k + ky) * k + kx] += s;
                        }
                }
            }
        }
        if (rx) {
            Tensor& gx = tp.grad(xid);
            const double* wd2 = wv2.data.data();
            double* gxd = gx.data.data();
            // Parallel over input channels: each thread owns one gx plane, so
            // the scatter through the padding map stays race-free and the
            // accumulation order is fixed.
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int ci = 0; ci < Cin; ++ci) {
                double* gxplane = gxd + static_cast<long>(ci) * H * W;
                for (int co = 0; co < Cout; ++co) {
                    const double* gplane = gyd + static_cast<long>(co) * Ho * Wo;
                    const double* wk = wd2 + ((static_cast<long>(co) * Cin + ci) * k) * k;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const double wval = wk[ky * k + kx];
                            if (wval == 0.0) continue;
                            for (int y = 0; y < Ho; ++y) {
                                const int iy = my[static_cast<std::size_t>(y * stride + ky)];
                                if (iy < 0) continue;
                                double* gxrow = gxplane + static_cast<long>(iy) * W;
                                const double* grow = gplane + static_cast<long>(y) * Wo;
                                for (int xo = 0; xo < Wo; ++xo) {
                                    const int ix = mx[static_cast<std::size_t>(xo * stride + kx)];
                                    if (ix >= 0) gxrow[ix] += wval * grow[xo];
                                }
                            }
                        }
                }
            }
        }
    });
}

} // namespace c2p::ad
