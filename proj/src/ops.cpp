#include "patchbmi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "patchbmi/rng.hpp"

namespace patchbmi {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

template <typename S>
bool wants_grad(GradTapeT<S>* tape, std::initializer_list<const TensorT<S>*> inputs) {
  if (!tape) return false;
  for (const TensorT<S>* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                  int stride, int padding, GradTapeT<S>* tape) {
  require(input.rank() == 3, "conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
  require(weight.rank() == 4,
          "conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_str(weight.shape()));
  const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  require(weight.dim(1) == cin, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                    " input channels, input has " + std::to_string(cin));
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  require(h + 2 * padding >= kh && w + 2 * padding >= kw,
          "conv2d: kernel larger than padded input");
  if (bias.defined())
    require(bias.rank() == 1 && bias.dim(0) == cout,
            "conv2d: bias must be [" + std::to_string(cout) + "], got " + shape_str(bias.shape()));

  const int oh = conv_output_extent(h, kh, stride, padding);
  const int ow = conv_output_extent(w, kw, stride, padding);
  TensorT<S> out({cout, oh, ow}, wants_grad(tape, {&input, &weight, &bias}));

  const S* in = input.data().data();
  const S* wt = weight.data().data();
  S* o = out.data().data();

  for (int oc = 0; oc < cout; ++oc) {
    S* oplane = o + static_cast<std::size_t>(oc) * oh * ow;
    const S b = bias.defined() ? bias.data()[static_cast<std::size_t>(oc)] : S{0};
    std::fill(oplane, oplane + static_cast<std::size_t>(oh) * ow, b);
    for (int ic = 0; ic < cin; ++ic) {
      const S* iplane = in + static_cast<std::size_t>(ic) * h * w;
      const S* wk = wt + (static_cast<std::size_t>(oc) * cin + ic) * kh * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const S wv = wk[ky * kw + kx];
          if (wv == S{0}) continue;
          const int lo_num = padding - kx;
          const int ox_lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
          const int hi_num = w - 1 + padding - kx;
          if (hi_num < 0) continue;
          const int ox_hi = std::min(ow - 1, hi_num / stride);
          if (ox_hi < ox_lo) continue;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - padding;
            if (iy < 0 || iy >= h) continue;
            const S* irow = iplane + static_cast<std::size_t>(iy) * w + (ox_lo * stride + kx - padding);
            S* orow = oplane + static_cast<std::size_t>(oy) * ow + ox_lo;
            const int n = ox_hi - ox_lo + 1;
            if (stride == 1) {
              for (int i = 0; i < n; ++i) orow[i] += wv * irow[i];
            } else {
              for (int i = 0; i < n; ++i) orow[i] += wv * irow[static_cast<std::size_t>(i) * stride];
            }
          }
        }
      }
    }
  }

  if (out.requires_grad()) {
    tape->record("conv2d", [input, weight, bias, out, stride, padding, cin, h, w, cout, kh, kw, oh,
                            ow]() {
      const S* go = out.grad().data();
      const S* in = input.data().data();
      const S* wt = weight.data().data();
      if (bias.defined() && bias.requires_grad()) {
        S* gb = const_cast<TensorT<S>&>(bias).grad().data();
        for (int oc = 0; oc < cout; ++oc) {
          const S* gplane = go + static_cast<std::size_t>(oc) * oh * ow;
          S acc{0};
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) acc += gplane[i];
          gb[oc] += acc;
        }
      }
      const bool need_gw = weight.requires_grad();
      const bool need_gin = input.requires_grad();
      S* gw = need_gw ? const_cast<TensorT<S>&>(weight).grad().data() : nullptr;
      S* gin = need_gin ? const_cast<TensorT<S>&>(input).grad().data() : nullptr;
      if (!need_gw && !need_gin) return;
      for (int oc = 0; oc < cout; ++oc) {
        const S* gplane = go + static_cast<std::size_t>(oc) * oh * ow;
        for (int ic = 0; ic < cin; ++ic) {
          const S* iplane = in + static_cast<std::size_t>(ic) * h * w;
          S* gin_plane = need_gin ? gin + static_cast<std::size_t>(ic) * h * w : nullptr;
          const std::size_t wbase = (static_cast<std::size_t>(oc) * cin + ic) * kh * kw;
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const int lo_num = padding - kx;
              const int ox_lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
              const int hi_num = w - 1 + padding - kx;
              if (hi_num < 0) continue;
              const int ox_hi = std::min(ow - 1, hi_num / stride);
              if (ox_hi < ox_lo) continue;
              const S wv = wt[wbase + ky * kw + kx];
              S wacc{0};
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= h) continue;
                const S* irow =
                    iplane + static_cast<std::size_t>(iy) * w + (ox_lo * stride + kx - padding);
                const S* grow = gplane + static_cast<std::size_t>(oy) * ow + ox_lo;
                const int n = ox_hi - ox_lo + 1;
                if (stride == 1) {
                  if (need_gw)
                    for (int i = 0; i < n; ++i) wacc += grow[i] * irow[i];
                  if (need_gin) {
                    S* girow = gin_plane + static_cast<std::size_t>(iy) * w +
                               (ox_lo * stride + kx - padding);
                    for (int i = 0; i < n; ++i) girow[i] += wv * grow[i];
                  }
                } else {
                  if (need_gw)
                    for (int i = 0; i < n; ++i) wacc += grow[i] * irow[static_cast<std::size_t>(i) * stride];
                  if (need_gin) {
                    S* girow = gin_plane + static_cast<std::size_t>(iy) * w +
                               (ox_lo * stride + kx - padding);
                    for (int i = 0; i < n; ++i) girow[static_cast<std::size_t>(i) * stride] += wv * grow[i];
                  }
                }
              }
              if (need_gw) gw[wbase + ky * kw + kx] += wacc;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> maxpool2d(const TensorT<S>& input, GradTapeT<S>* tape) {
  require(input.rank() == 3, "maxpool2d: input must be [C,H,W], got " + shape_str(input.shape()));
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2d: spatial extents must be even, got " +
                                        std::to_string(h) + "x" + std::to_string(w));
  const int oh = h / 2, ow = w / 2;
  const bool rec = wants_grad(tape, {&input});
  TensorT<S> out({c, oh, ow}, rec);

  // flat per-plane index of the chosen element, for gradient routing
  std::vector<std::int32_t> argmax;
  if (rec) argmax.resize(static_cast<std::size_t>(c) * oh * ow);

  const S* in = input.data().data();
  S* o = out.data().data();
  for (int ch = 0; ch < c; ++ch) {
    const S* iplane = in + static_cast<std::size_t>(ch) * h * w;
    S* oplane = o + static_cast<std::size_t>(ch) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const int iy = oy * 2, ix = ox * 2;
        // ties keep the first candidate in row-major window order
        int best = iy * w + ix;
        S bv = iplane[best];
        const int cand[3] = {iy * w + ix + 1, (iy + 1) * w + ix, (iy + 1) * w + ix + 1};
        for (int k = 0; k < 3; ++k) {
          if (iplane[cand[k]] > bv) {
            bv = iplane[cand[k]];
            best = cand[k];
          }
        }
        oplane[oy * ow + ox] = bv;
        if (rec) argmax[(static_cast<std::size_t>(ch) * oh + oy) * ow + ox] = best;
      }
    }
  }

  if (rec) {
    tape->record("maxpool2d", [input, out, argmax = std::move(argmax), c, h, w, oh, ow]() {
      if (!input.requires_grad()) return;
      S* gin = const_cast<TensorT<S>&>(input).grad().data();
      const S* go = out.grad().data();
      for (int ch = 0; ch < c; ++ch) {
        S* gplane = gin + static_cast<std::size_t>(ch) * h * w;
        const S* goplane = go + static_cast<std::size_t>(ch) * oh * ow;
        const std::int32_t* am = argmax.data() + static_cast<std::size_t>(ch) * oh * ow;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i)
          gplane[am[i]] += goplane[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> linear(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                  GradTapeT<S>* tape) {
  require(input.rank() == 1, "linear: input must be rank 1, got " + shape_str(input.shape()));
  require(weight.rank() == 2, "linear: weight must be [Nout,Nin], got " + shape_str(weight.shape()));
  const int nin = input.dim(0), nout = weight.dim(0);
  require(weight.dim(1) == nin, "linear: weight expects " + std::to_string(weight.dim(1)) +
                                    " inputs, input has " + std::to_string(nin));
  if (bias.defined())
    require(bias.rank() == 1 && bias.dim(0) == nout,
            "linear: bias must be [" + std::to_string(nout) + "], got " + shape_str(bias.shape()));

  TensorT<S> out({nout}, wants_grad(tape, {&input, &weight, &bias}));
  const S* x = input.data().data();
  const S* wt = weight.data().data();
  S* o = out.data().data();
  for (int j = 0; j < nout; ++j) {
    const S* row = wt + static_cast<std::size_t>(j) * nin;
    S acc = bias.defined() ? bias.data()[static_cast<std::size_t>(j)] : S{0};
    for (int i = 0; i < nin; ++i) acc += row[i] * x[i];
    o[j] = acc;
  }

  if (out.requires_grad()) {
    tape->record("linear", [input, weight, bias, out, nin, nout]() {
      const S* go = out.grad().data();
      const S* x = input.data().data();
      const S* wt = weight.data().data();
      if (bias.defined() && bias.requires_grad()) {
        S* gb = const_cast<TensorT<S>&>(bias).grad().data();
        for (int j = 0; j < nout; ++j) gb[j] += go[j];
      }
      if (weight.requires_grad()) {
        S* gw = const_cast<TensorT<S>&>(weight).grad().data();
        for (int j = 0; j < nout; ++j) {
          const S g = go[j];
          if (g == S{0}) continue;
          S* grow = gw + static_cast<std::size_t>(j) * nin;
          for (int i = 0; i < nin; ++i) grow[i] += g * x[i];
        }
      }
      if (input.requires_grad()) {
        S* gin = const_cast<TensorT<S>&>(input).grad().data();
        for (int j = 0; j < nout; ++j) {
          const S g = go[j];
          if (g == S{0}) continue;
          const S* row = wt + static_cast<std::size_t>(j) * nin;
          for (int i = 0; i < nin; ++i) gin[i] += g * row[i];
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& input, GradTapeT<S>* tape) {
  TensorT<S> out(input.shape(), wants_grad(tape, {&input}));
  const S* x = input.data().data();
  S* o = out.data().data();
  const std::int64_t n = input.numel();
  for (std::int64_t i = 0; i < n; ++i) o[i] = x[i] > S{0} ? x[i] : S{0};

  if (out.requires_grad()) {
    tape->record("relu", [input, out, n]() {
      if (!input.requires_grad()) return;
      S* gin = const_cast<TensorT<S>&>(input).grad().data();
      const S* go = out.grad().data();
      const S* x = input.data().data();
      for (std::int64_t i = 0; i < n; ++i)
        if (x[i] > S{0}) gin[i] += go[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& input, GradTapeT<S>* tape) {
  TensorT<S> out(input.shape(), wants_grad(tape, {&input}));
  const S* x = input.data().data();
  S* o = out.data().data();
  const std::int64_t n = input.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    if (x[i] >= S{0}) {
      o[i] = S{1} / (S{1} + std::exp(-x[i]));
    } else {
      const S e = std::exp(x[i]);
      o[i] = e / (S{1} + e);
    }
  }

  if (out.requires_grad()) {
    tape->record("sigmoid", [input, out, n]() {
      if (!input.requires_grad()) return;
      S* gin = const_cast<TensorT<S>&>(input).grad().data();
      const S* go = out.grad().data();
      const S* y = out.data().data();
      for (std::int64_t i = 0; i < n; ++i) gin[i] += go[i] * y[i] * (S{1} - y[i]);
    });
  }
  return out;
}

template <typename S>
TensorT<S> dropout(const TensorT<S>& input, double p, bool training, std::mt19937& rng,
                   GradTapeT<S>* tape) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1), got " + std::to_string(p));
  if (!training) return input;  // identity; gradients flow through the shared handle

  TensorT<S> out(input.shape(), wants_grad(tape, {&input}));
  const std::int64_t n = input.numel();
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  std::vector<S> mask(static_cast<std::size_t>(n));
  const S* x = input.data().data();
  S* o = out.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    mask[i] = uniform01(rng) < p ? S{0} : keep_scale;
    o[i] = x[i] * mask[i];
  }

  if (out.requires_grad()) {
    tape->record("dropout", [input, out, mask = std::move(mask), n]() {
      if (!input.requires_grad()) return;
      S* gin = const_cast<TensorT<S>&>(input).grad().data();
      const S* go = out.grad().data();
      for (std::int64_t i = 0; i < n; ++i) gin[i] += go[i] * mask[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& input, GradTapeT<S>* tape) {
  require(input.rank() == 3,
          "global_avg_pool: input must be [C,H,W], got " + shape_str(input.shape()));
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t area = static_cast<std::int64_t>(h) * w;
  TensorT<S> out({c}, wants_grad(tape, {&input}));
  const S* x = input.data().data();
  S* o = out.data().data();
  for (int ch = 0; ch < c; ++ch) {
    S acc{0};
    const S* plane = x + static_cast<std::size_t>(ch) * area;
    for (std::int64_t i = 0; i < area; ++i) acc += plane[i];
    o[ch] = acc / static_cast<S>(area);
  }

  if (out.requires_grad()) {
    tape->record("global_avg_pool", [input, out, c, area]() {
      if (!input.requires_grad()) return;
      S* gin = const_cast<TensorT<S>&>(input).grad().data();
      const S* go = out.grad().data();
      const S inv = S{1} / static_cast<S>(area);
      for (int ch = 0; ch < c; ++ch) {
        const S g = go[ch] * inv;
        S* plane = gin + static_cast<std::size_t>(ch) * area;
        for (std::int64_t i = 0; i < area; ++i) plane[i] += g;
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> scale_channels(const TensorT<S>& input, const TensorT<S>& gate, GradTapeT<S>* tape) {
  require(input.rank() == 3,
          "scale_channels: input must be [C,H,W], got " + shape_str(input.shape()));
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  require(gate.rank() == 1 && gate.dim(0) == c,
          "scale_channels: gate must be [" + std::to_string(c) + "], got " + shape_str(gate.shape()));
  const std::int64_t area = static_cast<std::int64_t>(h) * w;
  TensorT<S> out({c, h, w}, wants_grad(tape, {&input, &gate}));
  const S* x = input.data().data();
  const S* g = gate.data().data();
  S* o = out.data().data();
  for (int ch = 0; ch < c; ++ch) {
    const S gv = g[ch];
    const S* ip = x + static_cast<std::size_t>(ch) * area;
    S* op = o + static_cast<std::size_t>(ch) * area;
    for (std::int64_t i = 0; i < area; ++i) op[i] = gv * ip[i];
  }

  if (out.requires_grad()) {
    tape->record("scale_channels", [input, gate, out, c, area]() {
      const S* go = out.grad().data();
      const S* x = input.data().data();
      const S* g = gate.data().data();
      if (input.requires_grad()) {
        S* gin = const_cast<TensorT<S>&>(input).grad().data();
        for (int ch = 0; ch < c; ++ch) {
          const S gv = g[ch];
          const S* gop = go + static_cast<std::size_t>(ch) * area;
          S* gip = gin + static_cast<std::size_t>(ch) * area;
          for (std::int64_t i = 0; i < area; ++i) gip[i] += gv * gop[i];
        }
      }
      if (gate.requires_grad()) {
        S* gg = const_cast<TensorT<S>&>(gate).grad().data();
        for (int ch = 0; ch < c; ++ch) {
          const S* gop = go + static_cast<std::size_t>(ch) * area;
          const S* ip = x + static_cast<std::size_t>(ch) * area;
          S acc{0};
          for (std::int64_t i = 0; i < area; ++i) acc += gop[i] * ip[i];
          gg[ch] += acc;
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& input, std::vector<int> shape, GradTapeT<S>* tape) {
  TensorT<S> out(std::move(shape), wants_grad(tape, {&input}));
  require(out.numel() == input.numel(),
          "reshape: element count mismatch, " + std::to_string(input.numel()) + " vs " +
              std::to_string(out.numel()));
  std::copy(input.data().begin(), input.data().end(), out.data().begin());

  if (out.requires_grad()) {
    tape->record("reshape", [input, out]() {
      if (!input.requires_grad()) return;
      S* gin = const_cast<TensorT<S>&>(input).grad().data();
      const S* go = out.grad().data();
      const std::int64_t n = input.numel();
      for (std::int64_t i = 0; i < n; ++i) gin[i] += go[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> stack_scalars(std::span<const TensorT<S>> parts, GradTapeT<S>* tape) {
  require(!parts.empty(), "stack_scalars: need at least one element");
  bool any_grad = false;
  std::vector<S> vals(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require(parts[i].numel() == 1, "stack_scalars: element " + std::to_string(i) +
                                       " has " + std::to_string(parts[i].numel()) + " values");
    vals[i] = parts[i].item();
    any_grad = any_grad || parts[i].requires_grad();
  }
  TensorT<S> out({static_cast<int>(parts.size())}, std::move(vals), tape != nullptr && any_grad);

  if (out.requires_grad()) {
    std::vector<TensorT<S>> held(parts.begin(), parts.end());
    tape->record("stack_scalars", [held = std::move(held), out]() {
      const S* go = out.grad().data();
      for (std::size_t i = 0; i < held.size(); ++i)
        if (held[i].requires_grad()) const_cast<TensorT<S>&>(held[i]).grad()[0] += go[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> sum(const TensorT<S>& input, GradTapeT<S>* tape) {
  TensorT<S> out({1}, wants_grad(tape, {&input}));
  S acc{0};
  for (S v : input.data()) acc += v;
  out.data()[0] = acc;

  if (out.requires_grad()) {
    tape->record("sum", [input, out]() {
      if (!input.requires_grad()) return;
      S* gin = const_cast<TensorT<S>&>(input).grad().data();
      const S g = out.grad()[0];
      const std::int64_t n = input.numel();
      for (std::int64_t i = 0; i < n; ++i) gin[i] += g;
    });
  }
  return out;
}

template <typename S>
TensorT<S> mse_loss(const TensorT<S>& pred, const TensorT<S>& target, GradTapeT<S>* tape) {
  require(pred.rank() == 1 && target.rank() == 1, "mse_loss: inputs must be rank 1");
  const int n = pred.dim(0);
  require(target.dim(0) == n, "mse_loss: size mismatch, " + std::to_string(n) + " vs " +
                                  std::to_string(target.dim(0)));
  TensorT<S> out({1}, wants_grad(tape, {&pred, &target}));
  const S* p = pred.data().data();
  const S* t = target.data().data();
  S acc{0};
  for (int i = 0; i < n; ++i) {
    const S d = p[i] - t[i];
    acc += d * d;
  }
  out.data()[0] = acc / static_cast<S>(n);

  if (out.requires_grad()) {
    tape->record("mse_loss", [pred, target, out, n]() {
      const S g = out.grad()[0];
      const S* p = pred.data().data();
      const S* t = target.data().data();
      const S scale = g * S{2} / static_cast<S>(n);
      if (pred.requires_grad()) {
        S* gp = const_cast<TensorT<S>&>(pred).grad().data();
        for (int i = 0; i < n; ++i) gp[i] += scale * (p[i] - t[i]);
      }
      if (target.requires_grad()) {
        S* gt = const_cast<TensorT<S>&>(target).grad().data();
        for (int i = 0; i < n; ++i) gt[i] -= scale * (p[i] - t[i]);
      }
    });
  }
  return out;
}

#define PATCHBMI_INSTANTIATE_OPS(S)                                                      \
  template TensorT<S> conv2d(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,    \
                             int, int, GradTapeT<S>*);                                   \
  template TensorT<S> maxpool2d(const TensorT<S>&, GradTapeT<S>*);                       \
  template TensorT<S> linear(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,    \
                             GradTapeT<S>*);                                             \
  template TensorT<S> relu(const TensorT<S>&, GradTapeT<S>*);                            \
  template TensorT<S> sigmoid(const TensorT<S>&, GradTapeT<S>*);                         \
  template TensorT<S> dropout(const TensorT<S>&, double, bool, std::mt19937&,            \
                              GradTapeT<S>*);                                            \
  template TensorT<S> global_avg_pool(const TensorT<S>&, GradTapeT<S>*);                 \
  template TensorT<S> scale_channels(const TensorT<S>&, const TensorT<S>&,               \
                                     GradTapeT<S>*);                                     \
  template TensorT<S> reshape(const TensorT<S>&, std::vector<int>, GradTapeT<S>*);       \
  template TensorT<S> stack_scalars(std::span<const TensorT<S>>, GradTapeT<S>*);         \
  template TensorT<S> sum(const TensorT<S>&, GradTapeT<S>*);                             \
  template TensorT<S> mse_loss(const TensorT<S>&, const TensorT<S>&, GradTapeT<S>*);

PATCHBMI_INSTANTIATE_OPS(float)
PATCHBMI_INSTANTIATE_OPS(double)
#undef PATCHBMI_INSTANTIATE_OPS

}  // namespace patchbmi
