#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "kenn/nn/tensor.hpp"

namespace kenn {

// Reverse-mode autodiff over a dynamically recorded tape. A tape and its
// tensors are confined to one worker; parameters enter as leaves per tape.
template <class T>
class Tape {
public:
    using Ref = int32_t;

    static constexpr T kSqrtGuard = T(1e-12);

    Ref input(Tensor<T> v) { return push(std::move(v)); }

    const Tensor<T>& val(Ref r) const { return nodes_[static_cast<size_t>(r)].value; }

    const Tensor<T>& grad(Ref r) const { return nodes_[static_cast<size_t>(r)].grad; }

    size_t size() const { return nodes_.size(); }

    // ---- forward ops, each records its backward closure ----

    // x [B,C,H,W], w [O,C,kh,kw], b [O] -> [B,O,oh,ow], stride 1
    Ref conv2d(Ref x, Ref w, Ref b, int pad) {
        const Tensor<T>&X = val(x), &W = val(w), &Bv = val(b);
        if (X.rank() != 4 || W.rank() != 4 || Bv.rank() != 1 || X.dim(1) != W.dim(1) ||
            Bv.dim(0) != W.dim(0))
            throw input_error("conv2d: shape mismatch");
        const int batch = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
        const int cout = W.dim(0), kh = W.dim(2), kw = W.dim(3);
        const int oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
        if (oh < 1 || ow < 1) throw input_error("conv2d: output would be empty");

        Tensor<T> out = Tensor<T>::zeros({batch, cout, oh, ow});
        const T* xd = X.data.data();
        const T* wd_ = W.data.data();
        T* od = out.data.data();
        for (int bi = 0; bi < batch; ++bi)
            for (int o = 0; o < cout; ++o) {
                T* oplane = od + (static_cast<int64_t>(bi) * cout + o) * oh * ow;
                const T bias = Bv.data[static_cast<size_t>(o)];
                for (int i = 0; i < oh * ow; ++i) oplane[i] = bias;
                for (int c = 0; c < cin; ++c) {
                    const T* xplane = xd + (static_cast<int64_t>(bi) * cin + c) * h * wd;
                    const T* wplane = wd_ + (static_cast<int64_t>(o) * cin + c) * kh * kw;
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const T wv = wplane[ky * kw + kx];
                            const int y0 = std::max(0, pad - ky), y1 = std::min(oh, h + pad - ky);
                            const int x0 = std::max(0, pad - kx), x1 = std::min(ow, wd + pad - kx);
                            for (int y = y0; y < y1; ++y) {
                                const T* xrow = xplane + (y + ky - pad) * wd + (x0 + kx - pad);
                                T* orow = oplane + y * ow + x0;
                                for (int i = 0; i < x1 - x0; ++i) orow[i] += wv * xrow[i];
                            }
                        }
                }
            }
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, w, b, pad, batch, cin, h, wd, cout, kh,
                                               kw, oh, ow] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>&DX = grad_slot(x), &DW = grad_slot(w), &DB = grad_slot(b);
            const Tensor<T>&X = val(x), &W = val(w);
            const T* gd = G.data.data();
            for (int bi = 0; bi < batch; ++bi)
                for (int o = 0; o < cout; ++o) {
                    const T* gplane = gd + (static_cast<int64_t>(bi) * cout + o) * oh * ow;
                    T gb = 0;
                    for (int i = 0; i < oh * ow; ++i) gb += gplane[i];
                    DB.data[static_cast<size_t>(o)] += gb;
                    for (int c = 0; c < cin; ++c) {
                        const T* xplane = X.data.data() + (static_cast<int64_t>(bi) * cin + c) * h * wd;
                        const T* wplane = W.data.data() + (static_cast<int64_t>(o) * cin + c) * kh * kw;
                        T* dxplane = DX.data.data() + (static_cast<int64_t>(bi) * cin + c) * h * wd;
                        T* dwplane = DW.data.data() + (static_cast<int64_t>(o) * cin + c) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const T wv = wplane[ky * kw + kx];
                                const int y0 = std::max(0, pad - ky), y1 = std::min(oh, h + pad - ky);
                                const int x0 = std::max(0, pad - kx), x1 = std::min(ow, wd + pad - kx);
                                T dw_acc = 0;
                                for (int y = y0; y < y1; ++y) {
                                    const T* grow = gplane + y * ow + x0;
                                    const T* xrow = xplane + (y + ky - pad) * wd + (x0 + kx - pad);
                                    T* dxrow = dxplane + (y + ky - pad) * wd + (x0 + kx - pad);
                                    for (int i = 0; i < x1 - x0; ++i) {
                                        dxrow[i] += wv * grow[i];
                                        dw_acc += grow[i] * xrow[i];
                                    }
                                }
                                dwplane[ky * kw + kx] += dw_acc;
                            }
                    }
                }
        };
        return r;
    }

    // ---- planes-last variants: activations laid out [C,H,W,B] so the
    // batch dimension is the contiguous SIMD axis. Used by the encoder
    // hot path; numerics per sample are identical to the [B,C,H,W] ops.

    // [B,C,H,W] -> [C,H,W,B]
    Ref to_planes(Ref x) {
        const Tensor<T>& X = val(x);
        if (X.rank() != 4) throw input_error("to_planes: expected [B,C,H,W]");
        const int batch = X.dim(0), ch = X.dim(1), h = X.dim(2), w = X.dim(3);
        Tensor<T> out = Tensor<T>::zeros({ch, h, w, batch});
        const int64_t plane = static_cast<int64_t>(ch) * h * w;
        for (int bi = 0; bi < batch; ++bi)
            for (int64_t p = 0; p < plane; ++p)
                out.data[static_cast<size_t>(p * batch + bi)] =
                    X.data[static_cast<size_t>(bi * plane + p)];
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, batch, plane] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>& DX = grad_slot(x);
            for (int bi = 0; bi < batch; ++bi)
                for (int64_t p = 0; p < plane; ++p)
                    DX.data[static_cast<size_t>(bi * plane + p)] +=
                        G.data[static_cast<size_t>(p * batch + bi)];
        };
        return r;
    }

    // [C,H,W,B] -> [B, C*H*W]
    Ref to_rows(Ref x) {
        const Tensor<T>& X = val(x);
        if (X.rank() != 4) throw input_error("to_rows: expected [C,H,W,B]");
        const int batch = X.dim(3);
        const int64_t plane = X.numel() / batch;
        Tensor<T> out = Tensor<T>::zeros({batch, static_cast<int>(plane)});
        for (int64_t p = 0; p < plane; ++p)
            for (int bi = 0; bi < batch; ++bi)
                out.data[static_cast<size_t>(bi * plane + p)] =
                    X.data[static_cast<size_t>(p * batch + bi)];
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, batch, plane] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>& DX = grad_slot(x);
            for (int64_t p = 0; p < plane; ++p)
                for (int bi = 0; bi < batch; ++bi)
                    DX.data[static_cast<size_t>(p * batch + bi)] +=
                        G.data[static_cast<size_t>(bi * plane + p)];
        };
        return r;
    }

    // x [C,H,W,B], w [O,C,kh,kw], b [O] -> [O,oh,ow,B]
    Ref conv2d_pl(Ref x, Ref w, Ref b, int pad) {
        const Tensor<T>&X = val(x), &W = val(w), &Bv = val(b);
        if (X.rank() != 4 || W.rank() != 4 || Bv.rank() != 1 || X.dim(0) != W.dim(1) ||
            Bv.dim(0) != W.dim(0))
            throw input_error("conv2d_pl: shape mismatch");
        const int cin = X.dim(0), h = X.dim(1), wd = X.dim(2), batch = X.dim(3);
        const int cout = W.dim(0), kh = W.dim(2), kw = W.dim(3);
        const int oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
        if (oh < 1 || ow < 1) throw input_error("conv2d_pl: output would be empty");

        Tensor<T> out = Tensor<T>::zeros({cout, oh, ow, batch});
        for (int o = 0; o < cout; ++o) {
            T* oplane = out.data.data() + static_cast<int64_t>(o) * oh * ow * batch;
            const T bias = Bv.data[static_cast<size_t>(o)];
            for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow * batch; ++i) oplane[i] = bias;
            for (int c = 0; c < cin; ++c) {
                const T* xplane = X.data.data() + static_cast<int64_t>(c) * h * wd * batch;
                const T* wplane = W.data.data() + (static_cast<int64_t>(o) * cin + c) * kh * kw;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wv = wplane[ky * kw + kx];
                        const int y0 = std::max(0, pad - ky), y1 = std::min(oh, h + pad - ky);
                        const int x0 = std::max(0, pad - kx), x1 = std::min(ow, wd + pad - kx);
                        for (int y = y0; y < y1; ++y) {
                            const T* xrow =
                                xplane + ((y + ky - pad) * static_cast<int64_t>(wd) + (x0 + kx - pad)) * batch;
                            T* orow = oplane + (y * static_cast<int64_t>(ow) + x0) * batch;
                            const int64_t span = static_cast<int64_t>(x1 - x0) * batch;
                            for (int64_t i = 0; i < span; ++i) orow[i] += wv * xrow[i];
                        }
                    }
            }
        }
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, w, b, pad, batch, cin, h, wd, cout, kh,
                                               kw, oh, ow] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>&DX = grad_slot(x), &DW = grad_slot(w), &DB = grad_slot(b);
            const Tensor<T>&X = val(x), &W = val(w);
            constexpr int kLanes = 16;  // partial sums so the reductions vectorize
            for (int o = 0; o < cout; ++o) {
                const T* gplane = G.data.data() + static_cast<int64_t>(o) * oh * ow * batch;
                {
                    T lanes[kLanes] = {};
                    const int64_t n = static_cast<int64_t>(oh) * ow * batch;
                    int64_t i = 0;
                    for (; i + kLanes <= n; i += kLanes)
                        for (int k = 0; k < kLanes; ++k) lanes[k] += gplane[i + k];
                    for (; i < n; ++i) lanes[0] += gplane[i];
                    T gb = 0;
                    for (int k = 0; k < kLanes; ++k) gb += lanes[k];
                    DB.data[static_cast<size_t>(o)] += gb;
                }
                for (int c = 0; c < cin; ++c) {
                    const T* xplane = X.data.data() + static_cast<int64_t>(c) * h * wd * batch;
                    T* dxplane = DX.data.data() + static_cast<int64_t>(c) * h * wd * batch;
                    const T* wplane = W.data.data() + (static_cast<int64_t>(o) * cin + c) * kh * kw;
                    T* dwplane = DW.data.data() + (static_cast<int64_t>(o) * cin + c) * kh * kw;
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const T wv = wplane[ky * kw + kx];
                            const int y0 = std::max(0, pad - ky), y1 = std::min(oh, h + pad - ky);
                            const int x0 = std::max(0, pad - kx), x1 = std::min(ow, wd + pad - kx);
                            T lanes[kLanes] = {};
                            for (int y = y0; y < y1; ++y) {
                                const T* grow = gplane + (y * static_cast<int64_t>(ow) + x0) * batch;
                                const int64_t xoff =
                                    ((y + ky - pad) * static_cast<int64_t>(wd) + (x0 + kx - pad)) * batch;
                                const T* xrow = xplane + xoff;
                                T* dxrow = dxplane + xoff;
                                const int64_t span = static_cast<int64_t>(x1 - x0) * batch;
                                int64_t i = 0;
                                for (; i + kLanes <= span; i += kLanes)
                                    for (int k = 0; k < kLanes; ++k) {
                                        dxrow[i + k] += wv * grow[i + k];
                                        lanes[k] += grow[i + k] * xrow[i + k];
                                    }
                                for (; i < span; ++i) {
                                    dxrow[i] += wv * grow[i];
                                    lanes[0] += grow[i] * xrow[i];
                                }
                            }
                            T dw_acc = 0;
                            for (int k = 0; k < kLanes; ++k) dw_acc += lanes[k];
                            dwplane[ky * kw + kx] += dw_acc;
                        }
                }
            }
        };
        return r;
    }

    // [C,H,W,B] -> [C,H/2,W/2,B], first-max tie-break per batch lane
    Ref maxpool2_pl(Ref x) {
        const Tensor<T>& X = val(x);
        if (X.rank() != 4) throw input_error("maxpool2_pl: expected [C,H,W,B]");
        const int ch = X.dim(0), h = X.dim(1), w = X.dim(2), batch = X.dim(3);
        const int oh = h / 2, ow = w / 2;
        if (oh < 1 || ow < 1) throw input_error("maxpool2_pl: output would be empty");
        Tensor<T> out = Tensor<T>::zeros({ch, oh, ow, batch});
        auto argmax = std::make_shared<std::vector<int32_t>>(out.data.size());
        for (int c = 0; c < ch; ++c) {
            const T* xplane = X.data.data() + static_cast<int64_t>(c) * h * w * batch;
            T* oplane = out.data.data() + static_cast<int64_t>(c) * oh * ow * batch;
            int32_t* aplane = argmax->data() + static_cast<int64_t>(c) * oh * ow * batch;
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    const int64_t base00 = (2 * y * static_cast<int64_t>(w) + 2 * xx) * batch;
                    const int64_t cands[4] = {base00, base00 + batch, base00 + static_cast<int64_t>(w) * batch,
                                              base00 + static_cast<int64_t>(w) * batch + batch};
                    T* orow = oplane + (y * static_cast<int64_t>(ow) + xx) * batch;
                    int32_t* arow = aplane + (y * static_cast<int64_t>(ow) + xx) * batch;
                    for (int bi = 0; bi < batch; ++bi) {
                        T best = xplane[cands[0] + bi];
                        int64_t besti = cands[0] + bi;
                        for (int k = 1; k < 4; ++k) {
                            const T v = xplane[cands[k] + bi];
                            if (v > best) {
                                best = v;
                                besti = cands[k] + bi;
                            }
                        }
                        orow[bi] = best;
                        arow[bi] = static_cast<int32_t>(static_cast<int64_t>(c) * h * w * batch + besti);
                    }
                }
        }
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, argmax] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i)
                DX.data[static_cast<size_t>((*argmax)[i])] += G.data[i];
        };
        return r;
    }

    // 2x2 max pooling, stride 2, floor division of odd dims; first-max
    // tie-break (row-major) so pooling is deterministic.
    Ref maxpool2(Ref x) {
        const Tensor<T>& X = val(x);
        if (X.rank() != 4) throw input_error("maxpool2: expected [B,C,H,W]");
        const int batch = X.dim(0), ch = X.dim(1), h = X.dim(2), w = X.dim(3);
        const int oh = h / 2, ow = w / 2;
        if (oh < 1 || ow < 1) throw input_error("maxpool2: output would be empty");
        Tensor<T> out = Tensor<T>::zeros({batch, ch, oh, ow});
        auto argmax = std::make_shared<std::vector<int32_t>>(out.data.size());
        const T* xd = X.data.data();
        for (int64_t p = 0; p < static_cast<int64_t>(batch) * ch; ++p) {
            const T* xplane = xd + p * h * w;
            T* oplane = out.data.data() + p * oh * ow;
            int32_t* aplane = argmax->data() + p * oh * ow;
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    const int base = 2 * y * w + 2 * xx;
                    int best = base;
                    T bv = xplane[base];
                    const int cand[3] = {base + 1, base + w, base + w + 1};
                    for (int k = 0; k < 3; ++k)
                        if (xplane[cand[k]] > bv) {
                            bv = xplane[cand[k]];
                            best = cand[k];
                        }
                    oplane[y * ow + xx] = bv;
                    aplane[y * ow + xx] = static_cast<int32_t>(p * h * w + best);
                }
        }
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, argmax] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i)
                DX.data[static_cast<size_t>((*argmax)[i])] += G.data[i];
        };
        return r;
    }

    Ref relu(Ref x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x] {
            const Tensor<T>&G = grad_ref(r), &X = val(x);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i)
                if (X.data[i] > T(0)) DX.data[i] += G.data[i];
        };
        return r;
    }

    Ref tanh_act(Ref x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = std::tanh(v);
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x] {
            const Tensor<T>&G = grad_ref(r), &Y = val(r);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i)
                DX.data[i] += G.data[i] * (T(1) - Y.data[i] * Y.data[i]);
        };
        return r;
    }

    // log(1 + exp(x)) with overflow-safe branches (x > 20 -> x, x < -20 -> exp(x))
    static T softplus_value(T x) {
        if (x > T(20)) return x;
        if (x < T(-20)) return std::exp(x);
        return std::log1p(std::exp(x));
    }

    static T sigmoid_value(T x) {
        if (x >= T(0)) {
            const T e = std::exp(-x);
            return T(1) / (T(1) + e);
        }
        const T e = std::exp(x);
        return e / (T(1) + e);
    }

    Ref softplus(Ref x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = softplus_value(v);
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x] {
            const Tensor<T>&G = grad_ref(r), &X = val(x);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i)
                DX.data[i] += G.data[i] * sigmoid_value(X.data[i]);
        };
        return r;
    }

    // x [B,din], w [dout,din], b [dout] -> [B,dout]
    Ref linear(Ref x, Ref w, Ref b) {
        const Tensor<T>&X = val(x), &W = val(w), &Bv = val(b);
        if (X.rank() != 2 || W.rank() != 2 || Bv.rank() != 1 || X.dim(1) != W.dim(1) ||
            Bv.dim(0) != W.dim(0))
            throw input_error("linear: shape mismatch");
        const int batch = X.dim(0), din = X.dim(1), dout = W.dim(0);
        // outer-product accumulation over a transposed weight view keeps the
        // inner loop elementwise (vectorizes without fp reassociation)
        std::vector<T> wT(static_cast<size_t>(din) * dout);
        for (int o = 0; o < dout; ++o)
            for (int i = 0; i < din; ++i)
                wT[static_cast<size_t>(i) * dout + o] = W.data[static_cast<size_t>(o) * din + i];
        Tensor<T> out = Tensor<T>::zeros({batch, dout});
        for (int bi = 0; bi < batch; ++bi) {
            const T* xrow = X.data.data() + static_cast<int64_t>(bi) * din;
            T* orow = out.data.data() + static_cast<int64_t>(bi) * dout;
            for (int o = 0; o < dout; ++o) orow[o] = Bv.data[static_cast<size_t>(o)];
            for (int i = 0; i < din; ++i) {
                const T xi = xrow[i];
                if (xi == T(0)) continue;
                const T* wrow = wT.data() + static_cast<int64_t>(i) * dout;
                for (int o = 0; o < dout; ++o) orow[o] += xi * wrow[o];
            }
        }
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, w, b, batch, din, dout] {
            const Tensor<T>&G = grad_ref(r), &X = val(x), &W = val(w);
            Tensor<T>&DX = grad_slot(x), &DW = grad_slot(w), &DB = grad_slot(b);
            for (int bi = 0; bi < batch; ++bi) {
                const T* grow = G.data.data() + static_cast<int64_t>(bi) * dout;
                const T* xrow = X.data.data() + static_cast<int64_t>(bi) * din;
                T* dxrow = DX.data.data() + static_cast<int64_t>(bi) * din;
                for (int o = 0; o < dout; ++o) {
                    const T g = grow[o];
                    if (g == T(0)) continue;
                    const T* wrow = W.data.data() + static_cast<int64_t>(o) * din;
                    T* dwrow = DW.data.data() + static_cast<int64_t>(o) * din;
                    for (int i = 0; i < din; ++i) {
                        dxrow[i] += g * wrow[i];
                        dwrow[i] += g * xrow[i];
                    }
                    DB.data[static_cast<size_t>(o)] += g;
                }
            }
        };
        return r;
    }

    // [B,C,H,W] -> [B, C*H*W]
    Ref flatten(Ref x) {
        const Tensor<T>& X = val(x);
        if (X.rank() < 2) throw input_error("flatten: rank must be >= 2");
        Tensor<T> out = X;
        out.shape = {X.dim(0), static_cast<int>(X.numel() / X.dim(0))};
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i) DX.data[i] += G.data[i];
        };
        return r;
    }

    Ref concat_rows(Ref a, Ref b) {
        const Tensor<T>&A = val(a), &B = val(b);
        if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1))
            throw input_error("concat_rows: column mismatch");
        const int64_t na = A.numel();
        Tensor<T> out = Tensor<T>::zeros({A.dim(0) + B.dim(0), A.dim(1)});
        std::copy(A.data.begin(), A.data.end(), out.data.begin());
        std::copy(B.data.begin(), B.data.end(), out.data.begin() + na);
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, a, b, na] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>&DA = grad_slot(a), &DB = grad_slot(b);
            for (int64_t i = 0; i < na; ++i) DA.data[static_cast<size_t>(i)] += G.data[static_cast<size_t>(i)];
            for (size_t i = static_cast<size_t>(na); i < G.data.size(); ++i)
                DB.data[i - static_cast<size_t>(na)] += G.data[i];
        };
        return r;
    }

    // rows [begin, end) of a rank-2 tensor
    Ref slice_rows(Ref x, int begin, int end) {
        const Tensor<T>& X = val(x);
        if (X.rank() != 2 || begin < 0 || end > X.dim(0) || begin >= end)
            throw input_error("slice_rows: bad range");
        const int d = X.dim(1);
        Tensor<T> out = Tensor<T>::zeros({end - begin, d});
        std::copy(X.data.begin() + static_cast<int64_t>(begin) * d,
                  X.data.begin() + static_cast<int64_t>(end) * d, out.data.begin());
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, begin, d] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>& DX = grad_slot(x);
            T* base = DX.data.data() + static_cast<int64_t>(begin) * d;
            for (size_t i = 0; i < G.data.size(); ++i) base[i] += G.data[i];
        };
        return r;
    }

    Ref add(Ref a, Ref b) {
        const Tensor<T>&A = val(a), &B = val(b);
        if (!A.same_shape(B)) throw input_error("add: shape mismatch");
        Tensor<T> out = A;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, a, b] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>&DA = grad_slot(a), &DB = grad_slot(b);
            for (size_t i = 0; i < G.data.size(); ++i) {
                DA.data[i] += G.data[i];
                DB.data[i] += G.data[i];
            }
        };
        return r;
    }

    // alpha * x + y
    Ref axpy(T alpha, Ref x, Ref y) {
        const Tensor<T>&X = val(x), &Y = val(y);
        if (!X.same_shape(Y)) throw input_error("axpy: shape mismatch");
        Tensor<T> out = Y;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += alpha * X.data[i];
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, y, alpha] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>&DX = grad_slot(x), &DY = grad_slot(y);
            for (size_t i = 0; i < G.data.size(); ++i) {
                DX.data[i] += alpha * G.data[i];
                DY.data[i] += G.data[i];
            }
        };
        return r;
    }

    Ref scale(T alpha, Ref x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v *= alpha;
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x, alpha] {
            const Tensor<T>& G = grad_ref(r);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i) DX.data[i] += alpha * G.data[i];
        };
        return r;
    }

    // [B,d] x [B,d] -> [B]: squared Euclidean distance per row
    Ref rowwise_sqdist(Ref a, Ref b) {
        const Tensor<T>&A = val(a), &B = val(b);
        if (A.rank() != 2 || !A.same_shape(B)) throw input_error("rowwise_sqdist: shape mismatch");
        const int batch = A.dim(0), d = A.dim(1);
        Tensor<T> out = Tensor<T>::zeros({batch});
        constexpr int kLanes = 16;
        for (int bi = 0; bi < batch; ++bi) {
            const T* ar = A.data.data() + static_cast<int64_t>(bi) * d;
            const T* br = B.data.data() + static_cast<int64_t>(bi) * d;
            T lanes[kLanes] = {};
            int i = 0;
            for (; i + kLanes <= d; i += kLanes)
                for (int k = 0; k < kLanes; ++k) {
                    const T diff = ar[i + k] - br[i + k];
                    lanes[k] += diff * diff;
                }
            for (; i < d; ++i) {
                const T diff = ar[i] - br[i];
                lanes[0] += diff * diff;
            }
            T acc = 0;
            for (int k = 0; k < kLanes; ++k) acc += lanes[k];
            out.data[static_cast<size_t>(bi)] = acc;
        }
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, a, b, batch, d] {
            const Tensor<T>&G = grad_ref(r), &A = val(a), &B = val(b);
            Tensor<T>&DA = grad_slot(a), &DB = grad_slot(b);
            for (int bi = 0; bi < batch; ++bi) {
                const T g2 = T(2) * G.data[static_cast<size_t>(bi)];
                const T* ar = A.data.data() + static_cast<int64_t>(bi) * d;
                const T* br = B.data.data() + static_cast<int64_t>(bi) * d;
                T* dar = DA.data.data() + static_cast<int64_t>(bi) * d;
                T* dbr = DB.data.data() + static_cast<int64_t>(bi) * d;
                for (int i = 0; i < d; ++i) {
                    const T diff = g2 * (ar[i] - br[i]);
                    dar[i] += diff;
                    dbr[i] -= diff;
                }
            }
        };
        return r;
    }

    // v[B] * w[k] -> [B]; routes gradient into one component of w
    Ref pick_scale(Ref v, Ref w, int k) {
        const Tensor<T>&V = val(v), &W = val(w);
        if (V.rank() != 1 || W.rank() != 1 || k < 0 || k >= W.dim(0))
            throw input_error("pick_scale: bad index");
        const T wk = W.data[static_cast<size_t>(k)];
        Tensor<T> out = V;
        for (auto& x : out.data) x *= wk;
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, v, w, k, wk] {
            const Tensor<T>&G = grad_ref(r), &V = val(v);
            Tensor<T>&DV = grad_slot(v), &DW = grad_slot(w);
            T acc = 0;
            for (size_t i = 0; i < G.data.size(); ++i) {
                DV.data[i] += G.data[i] * wk;
                acc += G.data[i] * V.data[i];
            }
            DW.data[static_cast<size_t>(k)] += acc;
        };
        return r;
    }

    // sqrt(x + 1e-12) elementwise; keeps the gradient finite at x = 0
    Ref sqrt_guard(Ref x) {
        Tensor<T> out = val(x);
        for (auto& v : out.data) v = std::sqrt(v + kSqrtGuard);
        const Ref r = push(std::move(out));
        nodes_[static_cast<size_t>(r)].back = [this, r, x] {
            const Tensor<T>&G = grad_ref(r), &Y = val(r);
            Tensor<T>& DX = grad_slot(x);
            for (size_t i = 0; i < G.data.size(); ++i)
                DX.data[i] += G.data[i] / (T(2) * Y.data[i]);
        };
        return r;
    }

    // mean squared error against a constant target -> [1]
    Ref mse(Ref pred, std::vector<T> target) {
        const Tensor<T>& P = val(pred);
        if (P.rank() != 1) throw input_error("mse: prediction must be rank-1");
        if (P.data.empty()) throw input_error("mse: empty batch");
        if (P.data.size() != target.size()) throw input_error("mse: length mismatch");
        const int64_t n = P.numel();
        T acc = 0;
        for (size_t i = 0; i < P.data.size(); ++i) {
            const T d = P.data[i] - target[i];
            acc += d * d;
        }
        const Ref r = push(Tensor<T>::scalar(acc / static_cast<T>(n)));
        auto tgt = std::make_shared<std::vector<T>>(std::move(target));
        nodes_[static_cast<size_t>(r)].back = [this, r, pred, tgt, n] {
            const T g = grad_ref(r).data[0];
            const Tensor<T>& P = val(pred);
            Tensor<T>& DP = grad_slot(pred);
            const T c = T(2) * g / static_cast<T>(n);
            for (size_t i = 0; i < P.data.size(); ++i)
                DP.data[i] += c * (P.data[i] - (*tgt)[i]);
        };
        return r;
    }

    Ref sum_all(Ref x) {
        const Tensor<T>& X = val(x);
        T acc = 0;
        for (T v : X.data) acc += v;
        const Ref r = push(Tensor<T>::scalar(acc));
        nodes_[static_cast<size_t>(r)].back = [this, r, x] {
            const T g = grad_ref(r).data[0];
            Tensor<T>& DX = grad_slot(x);
            for (auto& v : DX.data) v += g;
        };
        return r;
    }

    // Seeds d(root)/d(root) = 1 and runs the recorded closures in reverse.
    void backward(Ref root) {
        if (val(root).numel() != 1) throw input_error("backward: root must be scalar");
        for (auto& n : nodes_) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.data.size(), T(0));
        }
        nodes_[static_cast<size_t>(root)].grad.data[0] = T(1);
        for (size_t i = nodes_.size(); i-- > 0;)
            if (nodes_[i].back) nodes_[i].back();
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void()> back;
    };

    Ref push(Tensor<T> v) {
#ifndef NDEBUG
        if (!v.all_finite()) throw numeric_error("tape: non-finite value in forward pass");
#endif
        nodes_.push_back(Node{std::move(v), {}, nullptr});
        return static_cast<Ref>(nodes_.size() - 1);
    }

    const Tensor<T>& grad_ref(Ref r) const { return nodes_[static_cast<size_t>(r)].grad; }

    Tensor<T>& grad_slot(Ref r) { return nodes_[static_cast<size_t>(r)].grad; }

    std::vector<Node> nodes_;
};

// Scalar softplus used by the weight reparameterizations.
inline double softplus(double x) { return Tape<double>::softplus_value(x); }

// Inverse of softplus; softplus_inverse(1) is the uniform-weight init.
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace kenn
