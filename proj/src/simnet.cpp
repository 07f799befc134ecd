#include "sfp/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sfp/io.hpp"
#include "sfp/rng.hpp"

namespace sfp {

namespace {

int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// ---------- primitive layers ----------

struct ConvCache {
  Matrix col;  // (in_c*k*k) x (n*out_h*out_w)
  int n = 0, in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

Tensor4 conv_forward(const Conv2dParams& p, const Tensor4& x,
                     ConvCache* cache) {
  const int oh = conv_out(x.h, p.k, p.stride, p.pad);
  const int ow = conv_out(x.w, p.k, p.stride, p.pad);
  const int patch = p.in_c * p.k * p.k;
  Matrix col(patch, static_cast<Eigen::Index>(x.n) * oh * ow);
  for (int i = 0; i < x.n; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index cc =
            (static_cast<Eigen::Index>(i) * oh + oy) * ow + ox;
        int rr = 0;
        for (int ci = 0; ci < p.in_c; ++ci)
          for (int ky = 0; ky < p.k; ++ky)
            for (int kx = 0; kx < p.k; ++kx, ++rr) {
              const int y = oy * p.stride - p.pad + ky;
              const int xx = ox * p.stride - p.pad + kx;
              col(rr, cc) = (y >= 0 && y < x.h && xx >= 0 && xx < x.w)
                                ? x.at(i, ci, y, xx)
                                : 0.0;
            }
      }

  Matrix out_mat = p.weight * col;  // out_c x (n*oh*ow)
  Tensor4 y(x.n, p.out_c, oh, ow);
  for (int i = 0; i < x.n; ++i)
    for (int o = 0; o < p.out_c; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          y.at(i, o, oy, ox) =
              out_mat(o, (static_cast<Eigen::Index>(i) * oh + oy) * ow + ox);

  if (cache) {
    cache->col = std::move(col);
    cache->n = x.n;
    cache->in_h = x.h;
    cache->in_w = x.w;
    cache->out_h = oh;
    cache->out_w = ow;
  }
  return y;
}

Tensor4 conv_backward(const Conv2dParams& p, const ConvCache& cache,
                      const Tensor4& dy, Matrix& dweight) {
  const int oh = cache.out_h, ow = cache.out_w;
  Matrix dy_mat(p.out_c, static_cast<Eigen::Index>(cache.n) * oh * ow);
  for (int i = 0; i < cache.n; ++i)
    for (int o = 0; o < p.out_c; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          dy_mat(o, (static_cast<Eigen::Index>(i) * oh + oy) * ow + ox) =
              dy.at(i, o, oy, ox);

  dweight = dy_mat * cache.col.transpose();
  Matrix dcol = p.weight.transpose() * dy_mat;

  Tensor4 dx(cache.n, p.in_c, cache.in_h, cache.in_w);
  for (int i = 0; i < cache.n; ++i)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index cc =
            (static_cast<Eigen::Index>(i) * oh + oy) * ow + ox;
        int rr = 0;
        for (int ci = 0; ci < p.in_c; ++ci)
          for (int ky = 0; ky < p.k; ++ky)
            for (int kx = 0; kx < p.k; ++kx, ++rr) {
              const int y = oy * p.stride - p.pad + ky;
              const int xx = ox * p.stride - p.pad + kx;
              if (y >= 0 && y < cache.in_h && xx >= 0 && xx < cache.in_w)
                dx.at(i, ci, y, xx) += dcol(rr, cc);
            }
      }
  return dx;
}

struct BnCache {
  Tensor4 x;
  Vector mean, invstd;
  bool train = true;
};

// Normalization uses biased batch variance; the running estimate keeps the
// unbiased one.  update_target, when given, receives the running-stat
// update (kept separate so a const forward stays const).
Tensor4 bn_forward(const BatchNormParams& p, const Tensor4& x, bool train,
                   BatchNormParams* update_target, BnCache* cache) {
  const int C = x.c;
  const double m = static_cast<double>(x.n) * x.h * x.w;
  Vector mean(C), invstd(C);
  if (train) {
    Vector sum = Vector::Zero(C), sumsq = Vector::Zero(C);
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < C; ++ch)
        for (int y = 0; y < x.h; ++y)
          for (int xx = 0; xx < x.w; ++xx) {
            double v = x.at(i, ch, y, xx);
            sum(ch) += v;
            sumsq(ch) += v * v;
          }
    mean = sum / m;
    Vector var(C);
    for (int ch = 0; ch < C; ++ch) {
      var(ch) = std::max(0.0, sumsq(ch) / m - mean(ch) * mean(ch));
      invstd(ch) = 1.0 / std::sqrt(var(ch) + p.eps);
    }
    if (update_target) {
      double correction = m > 1.0 ? m / (m - 1.0) : 1.0;
      update_target->running_mean =
          (1.0 - p.momentum) * update_target->running_mean + p.momentum * mean;
      update_target->running_var =
          (1.0 - p.momentum) * update_target->running_var +
          p.momentum * correction * var;
    }
  } else {
    mean = p.running_mean;
    for (int ch = 0; ch < C; ++ch)
      invstd(ch) = 1.0 / std::sqrt(p.running_var(ch) + p.eps);
  }

  Tensor4 y(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < C; ++ch)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
          y.at(i, ch, yy, xx) =
              p.gamma(ch) * (x.at(i, ch, yy, xx) - mean(ch)) * invstd(ch) +
              p.beta(ch);
  if (cache) {
    cache->x = x;
    cache->mean = std::move(mean);
    cache->invstd = std::move(invstd);
    cache->train = train;
  }
  return y;
}

// Train-mode backward; differentiates through the batch statistics.
Tensor4 bn_backward(const BatchNormParams& p, const BnCache& cache,
                    const Tensor4& dy, Vector& dgamma, Vector& dbeta) {
  check(cache.train, "bn_backward: cache from a non-training pass");
  const Tensor4& x = cache.x;
  const int C = x.c;
  const double m = static_cast<double>(x.n) * x.h * x.w;
  dgamma = Vector::Zero(C);
  dbeta = Vector::Zero(C);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < C; ++ch)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
          double xhat =
              (x.at(i, ch, y, xx) - cache.mean(ch)) * cache.invstd(ch);
          dgamma(ch) += dy.at(i, ch, y, xx) * xhat;
          dbeta(ch) += dy.at(i, ch, y, xx);
        }
  Tensor4 dx(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < C; ++ch)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
          double xhat =
              (x.at(i, ch, y, xx) - cache.mean(ch)) * cache.invstd(ch);
          dx.at(i, ch, y, xx) =
              p.gamma(ch) * cache.invstd(ch) *
              (dy.at(i, ch, y, xx) - dbeta(ch) / m - xhat * dgamma(ch) / m);
        }
  return dx;
}

void relu_inplace(Tensor4& t) {
  for (double& v : t.v) v = std::max(0.0, v);
}

// dx = dy where the forward output was positive.
Tensor4 relu_backward(const Tensor4& y, const Tensor4& dy) {
  Tensor4 dx = dy;
  for (std::size_t i = 0; i < y.v.size(); ++i)
    if (y.v[i] <= 0.0) dx.v[i] = 0.0;
  return dx;
}

// ---------- residual blocks ----------

struct BlockCache {
  ConvCache c1;
  BnCache b1;
  Tensor4 a1;  // post first relu
  ConvCache c2;
  BnCache b2;
  ConvCache pc;
  BnCache pb;
  Tensor4 out;  // post final relu
};

Tensor4 block_forward(const BasicBlock& blk, const Tensor4& x, bool train,
                      BasicBlock* upd, BlockCache& cache) {
  Tensor4 t = conv_forward(blk.conv1, x, &cache.c1);
  t = bn_forward(blk.bn1, t, train, upd ? &upd->bn1 : nullptr, &cache.b1);
  relu_inplace(t);
  cache.a1 = t;
  t = conv_forward(blk.conv2, t, &cache.c2);
  t = bn_forward(blk.bn2, t, train, upd ? &upd->bn2 : nullptr, &cache.b2);

  Tensor4 skip;
  if (blk.has_projection) {
    skip = conv_forward(blk.proj, x, &cache.pc);
    skip = bn_forward(blk.proj_bn, skip, train, upd ? &upd->proj_bn : nullptr,
                      &cache.pb);
  } else {
    skip = x;
  }
  check(t.same_shape(skip), "block_forward: main/skip shape mismatch");
  for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] += skip.v[i];
  relu_inplace(t);
  cache.out = t;
  return t;
}

Tensor4 block_backward(const BasicBlock& blk, const BlockCache& cache,
                       const Tensor4& dy, BlockGrads& g) {
  Tensor4 dsum = relu_backward(cache.out, dy);

  Tensor4 dt = bn_backward(blk.bn2, cache.b2, dsum, g.bn2.gamma, g.bn2.beta);
  dt = conv_backward(blk.conv2, cache.c2, dt, g.conv2_w);
  dt = relu_backward(cache.a1, dt);
  dt = bn_backward(blk.bn1, cache.b1, dt, g.bn1.gamma, g.bn1.beta);
  Tensor4 dx = conv_backward(blk.conv1, cache.c1, dt, g.conv1_w);

  if (blk.has_projection) {
    Tensor4 ds =
        bn_backward(blk.proj_bn, cache.pb, dsum, g.proj_bn.gamma, g.proj_bn.beta);
    ds = conv_backward(blk.proj, cache.pc, ds, g.proj_w);
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += ds.v[i];
  } else {
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dsum.v[i];
  }
  return dx;
}

// ---------- whole net ----------

struct Tape {
  ConvCache c0;
  BnCache b0;
  Tensor4 a0;
  std::vector<BlockCache> blocks;
  Matrix features;  // n x widths[5]
  int pool_h = 0, pool_w = 0;
};

std::vector<double> net_forward(const SimNetParams& p, const Tensor4& x,
                                bool train, SimNetParams* upd, Tape& tape) {
  check(x.c == 1 && x.h == p.input_rows() && x.w == p.input_cols(),
        "simnet: input shape " + std::to_string(x.h) + "x" +
            std::to_string(x.w) + " does not match net built for " +
            std::to_string(p.input_rows()) + "x" + std::to_string(p.input_cols()));
  Tensor4 t = conv_forward(p.stem, x, &tape.c0);
  t = bn_forward(p.stem_bn, t, train, upd ? &upd->stem_bn : nullptr, &tape.b0);
  relu_inplace(t);
  tape.a0 = t;

  tape.blocks.resize(p.blocks.size());
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    t = block_forward(p.blocks[i], t, train, upd ? &upd->blocks[i] : nullptr,
                      tape.blocks[i]);

  tape.pool_h = t.h;
  tape.pool_w = t.w;
  const double area = static_cast<double>(t.h) * t.w;
  tape.features.resize(t.n, t.c);
  for (int i = 0; i < t.n; ++i)
    for (int ch = 0; ch < t.c; ++ch) {
      double acc = 0.0;
      for (int y = 0; y < t.h; ++y)
        for (int xx = 0; xx < t.w; ++xx) acc += t.at(i, ch, y, xx);
      tape.features(i, ch) = acc / area;
    }

  std::vector<double> logits(static_cast<std::size_t>(t.n));
  for (int i = 0; i < t.n; ++i)
    logits[static_cast<std::size_t>(i)] =
        p.fc_w.row(0).dot(tape.features.row(i)) + p.fc_b;
  return logits;
}

SimNetGrads make_grads(const SimNetParams& p) {
  SimNetGrads g;
  g.stem_w = Matrix::Zero(p.stem.weight.rows(), p.stem.weight.cols());
  g.stem_bn.gamma = Vector::Zero(p.stem_bn.gamma.size());
  g.stem_bn.beta = Vector::Zero(p.stem_bn.beta.size());
  g.blocks.resize(p.blocks.size());
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    auto& gb = g.blocks[i];
    gb.conv1_w = Matrix::Zero(b.conv1.weight.rows(), b.conv1.weight.cols());
    gb.bn1.gamma = Vector::Zero(b.bn1.gamma.size());
    gb.bn1.beta = Vector::Zero(b.bn1.beta.size());
    gb.conv2_w = Matrix::Zero(b.conv2.weight.rows(), b.conv2.weight.cols());
    gb.bn2.gamma = Vector::Zero(b.bn2.gamma.size());
    gb.bn2.beta = Vector::Zero(b.bn2.beta.size());
    if (b.has_projection) {
      gb.proj_w = Matrix::Zero(b.proj.weight.rows(), b.proj.weight.cols());
      gb.proj_bn.gamma = Vector::Zero(b.proj_bn.gamma.size());
      gb.proj_bn.beta = Vector::Zero(b.proj_bn.beta.size());
    }
  }
  g.fc_w = Matrix::Zero(1, p.fc_w.cols());
  g.fc_b = 0.0;
  return g;
}

Tensor4 net_backward(const SimNetParams& p, const Tape& tape,
                     const std::vector<double>& dlogits, SimNetGrads& g) {
  const int n = static_cast<int>(dlogits.size());
  const int C = static_cast<int>(p.fc_w.cols());

  g.fc_b = 0.0;
  g.fc_w.setZero();
  Matrix dfeat(n, C);
  for (int i = 0; i < n; ++i) {
    const double dl = dlogits[static_cast<std::size_t>(i)];
    g.fc_b += dl;
    g.fc_w.row(0) += dl * tape.features.row(i);
    dfeat.row(i) = dl * p.fc_w.row(0);
  }

  const double area = static_cast<double>(tape.pool_h) * tape.pool_w;
  Tensor4 dt(n, C, tape.pool_h, tape.pool_w);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < C; ++ch) {
      const double v = dfeat(i, ch) / area;
      for (int y = 0; y < tape.pool_h; ++y)
        for (int xx = 0; xx < tape.pool_w; ++xx) dt.at(i, ch, y, xx) = v;
    }

  for (std::size_t i = p.blocks.size(); i-- > 0;)
    dt = block_backward(p.blocks[i], tape.blocks[i], dt, g.blocks[i]);

  dt = relu_backward(tape.a0, dt);
  dt = bn_backward(p.stem_bn, tape.b0, dt, g.stem_bn.gamma, g.stem_bn.beta);
  return conv_backward(p.stem, tape.c0, dt, g.stem_w);
}

Conv2dParams make_conv(int in_c, int out_c, int k, int stride, int pad) {
  Conv2dParams c;
  c.in_c = in_c;
  c.out_c = out_c;
  c.k = k;
  c.stride = stride;
  c.pad = pad;
  c.weight = Matrix::Zero(out_c, static_cast<Eigen::Index>(in_c) * k * k);
  return c;
}

BatchNormParams make_bn(int c) {
  BatchNormParams b;
  b.gamma = Vector::Ones(c);
  b.beta = Vector::Zero(c);
  b.running_mean = Vector::Zero(c);
  b.running_var = Vector::Ones(c);
  return b;
}

SimNetParams build_structure(int n_f, int h, const std::vector<int>& widths) {
  check(widths.size() == 6, "simnet: widths must list the stem and five stages");
  for (int w : widths) check(w > 0, "simnet: widths must be positive");
  check(n_f >= 1 && h >= 1, "simnet: n_f and h must be positive");
  check(4 * n_f >= 8 && h >= 8,
        "simnet: input too small for the stride plan (need 4*n_f >= 8 and h >= 8)");

  SimNetParams p;
  p.n_f = n_f;
  p.h = h;
  p.widths = widths;
  p.stem = make_conv(1, widths[0], 3, 1, 1);
  p.stem_bn = make_bn(widths[0]);

  const int stage_strides[5] = {1, 2, 2, 2, 1};
  int in_c = widths[0];
  for (int stage = 0; stage < 5; ++stage) {
    const int out_c = widths[static_cast<std::size_t>(stage) + 1];
    for (int b = 0; b < 2; ++b) {
      BasicBlock blk;
      blk.stride = (b == 0) ? stage_strides[stage] : 1;
      const int bin = (b == 0) ? in_c : out_c;
      blk.conv1 = make_conv(bin, out_c, 3, blk.stride, 1);
      blk.bn1 = make_bn(out_c);
      blk.conv2 = make_conv(out_c, out_c, 3, 1, 1);
      blk.bn2 = make_bn(out_c);
      if (blk.stride != 1 || bin != out_c) {
        blk.has_projection = true;
        blk.proj = make_conv(bin, out_c, 1, blk.stride, 0);
        blk.proj_bn = make_bn(out_c);
      }
      p.blocks.push_back(std::move(blk));
    }
    in_c = out_c;
  }
  p.fc_w = Matrix::Zero(1, widths[5]);
  p.fc_b = 0.0;
  return p;
}

struct Span {
  double* p;
  std::size_t n;
};

// Trainable tensors, fixed traversal order shared by init, the optimizer,
// and the gradient structures.
std::vector<Span> trainable_spans(SimNetParams& p) {
  std::vector<Span> out;
  auto add_m = [&](Matrix& m) {
    out.push_back({m.data(), static_cast<std::size_t>(m.size())});
  };
  auto add_v = [&](Vector& v) {
    out.push_back({v.data(), static_cast<std::size_t>(v.size())});
  };
  add_m(p.stem.weight);
  add_v(p.stem_bn.gamma);
  add_v(p.stem_bn.beta);
  for (auto& b : p.blocks) {
    add_m(b.conv1.weight);
    add_v(b.bn1.gamma);
    add_v(b.bn1.beta);
    add_m(b.conv2.weight);
    add_v(b.bn2.gamma);
    add_v(b.bn2.beta);
    if (b.has_projection) {
      add_m(b.proj.weight);
      add_v(b.proj_bn.gamma);
      add_v(b.proj_bn.beta);
    }
  }
  add_m(p.fc_w);
  out.push_back({&p.fc_b, 1});
  return out;
}

std::vector<Span> grad_spans(SimNetGrads& g, const SimNetParams& p) {
  std::vector<Span> out;
  auto add_m = [&](Matrix& m) {
    out.push_back({m.data(), static_cast<std::size_t>(m.size())});
  };
  auto add_v = [&](Vector& v) {
    out.push_back({v.data(), static_cast<std::size_t>(v.size())});
  };
  add_m(g.stem_w);
  add_v(g.stem_bn.gamma);
  add_v(g.stem_bn.beta);
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    auto& b = g.blocks[i];
    add_m(b.conv1_w);
    add_v(b.bn1.gamma);
    add_v(b.bn1.beta);
    add_m(b.conv2_w);
    add_v(b.bn2.gamma);
    add_v(b.bn2.beta);
    if (p.blocks[i].has_projection) {
      add_m(b.proj_w);
      add_v(b.proj_bn.gamma);
      add_v(b.proj_bn.beta);
    }
  }
  add_m(g.fc_w);
  out.push_back({&g.fc_b, 1});
  return out;
}

}  // namespace

std::vector<int> toy_widths() { return {4, 4, 8, 16, 32, 32}; }
std::vector<int> paper_widths() { return {64, 64, 128, 256, 512, 512}; }

SimNetParams simnet_init(int n_f, int h, const std::vector<int>& widths,
                         std::uint64_t seed) {
  SimNetParams p = build_structure(n_f, h, widths);
  CounterRng rng(seed);
  auto fill = [&](Matrix& w, int fan_in) {
    rng.fill_uniform_symmetric(w, 1.0 / std::sqrt(double(fan_in)));
  };
  fill(p.stem.weight, p.stem.in_c * p.stem.k * p.stem.k);
  for (auto& b : p.blocks) {
    fill(b.conv1.weight, b.conv1.in_c * b.conv1.k * b.conv1.k);
    fill(b.conv2.weight, b.conv2.in_c * b.conv2.k * b.conv2.k);
    if (b.has_projection) fill(b.proj.weight, b.proj.in_c);
  }
  fill(p.fc_w, static_cast<int>(p.fc_w.cols()));
  return p;
}

BatchLoss simnet_loss(SimNetParams& params, const Tensor4& input,
                      const std::vector<double>& labels,
                      double label_smoothing, bool update_running) {
  check(input.n == static_cast<int>(labels.size()),
        "simnet_loss: batch size does not match label count");
  check(input.n > 0, "simnet_loss: empty batch");

  Tape tape;
  std::vector<double> logits = net_forward(
      params, input, /*train=*/true, update_running ? &params : nullptr, tape);

  BatchLoss out;
  out.scores.resize(logits.size());
  std::vector<double> dlogits(logits.size());
  const double n = static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double y = labels[i];
    check(y == 0.0 || y == 1.0, "simnet_loss: labels must be 0 or 1");
    const double target = y * (1.0 - label_smoothing) +
                          (1.0 - y) * label_smoothing;
    const double s = sigmoid(logits[i]);
    out.scores[i] = s;
    const double sc = std::clamp(s, 1e-12, 1.0 - 1e-12);
    out.loss += -(target * std::log(sc) + (1.0 - target) * std::log(1.0 - sc));
    dlogits[i] = (s - target) / n;
  }
  out.loss /= n;

  out.grads = make_grads(params);
  out.input_grad = net_backward(params, tape, dlogits, out.grads);
  return out;
}

double simnet_score(const SimNetParams& params, const Fingerprint& fp) {
  check(fp.n_f == params.n_f && fp.top_k == params.h,
        "simnet_score: fingerprint shape does not match the net");
  Tensor4 x(1, 1, params.input_rows(), params.input_cols());
  for (int y = 0; y < x.h; ++y)
    for (int xx = 0; xx < x.w; ++xx) x.at(0, 0, y, xx) = fp.data(y, xx);
  Tape tape;
  std::vector<double> logits =
      net_forward(params, x, /*train=*/false, nullptr, tape);
  return sigmoid(logits[0]);
}

std::vector<double> simnet_scores(const SimNetParams& params,
                                  const std::vector<Fingerprint>& fps) {
  std::vector<double> out;
  out.reserve(fps.size());
  for (const auto& fp : fps) out.push_back(simnet_score(params, fp));
  return out;
}

Verdict simnet_verify(const SimNetParams& params, const Fingerprint& fp,
                      double tau) {
  check(tau >= 0.0 && tau <= 1.0, "simnet_verify: tau must be in [0, 1]");
  Verdict v;
  v.tau = tau;
  v.score = simnet_score(params, fp);
  v.related = v.score > tau;
  return v;
}

Tensor4 corpus_batch(const TrainingSet& corpus, int n_f, int h) {
  check(!corpus.items.empty(), "corpus_batch: empty corpus");
  Tensor4 batch(static_cast<int>(corpus.items.size()), 1, 4 * n_f, h);
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const Fingerprint& fp = corpus.items[i].fp;
    check(fp.n_f == n_f && fp.top_k == h,
          "corpus_batch: item " + std::to_string(i) + " (" + fp.model_id +
              ") has shape n_f=" + std::to_string(fp.n_f) + " h=" +
              std::to_string(fp.top_k) + ", expected n_f=" +
              std::to_string(n_f) + " h=" + std::to_string(h));
    for (int y = 0; y < 4 * n_f; ++y)
      for (int xx = 0; xx < h; ++xx)
        batch.at(static_cast<int>(i), 0, y, xx) = fp.data(y, xx);
  }
  return batch;
}

std::vector<double> corpus_labels(const TrainingSet& corpus) {
  std::vector<double> out;
  out.reserve(corpus.items.size());
  for (const auto& it : corpus.items) out.push_back(double(it.label));
  return out;
}

TrainResult simnet_train(const TrainingSet& corpus, int n_f, int h,
                         const std::vector<int>& widths,
                         const TrainConfig& cfg) {
  check(cfg.epochs >= 0, "simnet_train: epochs must be nonnegative");
  check(cfg.learning_rate > 0.0, "simnet_train: learning rate must be positive");
  check(cfg.lr_step >= 1, "simnet_train: lr_step must be at least 1");
  check(cfg.lr_gamma > 0.0, "simnet_train: lr_gamma must be positive");
  check(cfg.label_smoothing >= 0.0 && cfg.label_smoothing < 0.5,
        "simnet_train: label smoothing must be in [0, 0.5)");
  check(cfg.fgsm_epsilon >= 0.0, "simnet_train: fgsm epsilon must be nonnegative");

  Tensor4 all = corpus_batch(corpus, n_f, h);
  std::vector<double> labels = corpus_labels(corpus);
  const int n = all.n;
  bool has_pos = false, has_neg = false;
  for (double y : labels) (y > 0.5 ? has_pos : has_neg) = true;
  check(has_pos && has_neg,
        "simnet_train: corpus must contain both related and unrelated items");

  TrainResult result;
  result.params = simnet_init(n_f, h, widths, cfg.seed);
  SimNetParams& params = result.params;

  std::vector<Span> spans = trainable_spans(params);
  std::size_t total = 0;
  for (const auto& s : spans) total += s.n;
  std::vector<double> adam_m(total, 0.0), adam_v(total, 0.0);

  const int batch = (cfg.batch_size <= 0 || cfg.batch_size > n)
                        ? n
                        : cfg.batch_size;
  long step = 0;

  auto slice = [&](int from, int count) {
    Tensor4 xb(count, 1, all.h, all.w);
    std::copy(all.v.begin() + static_cast<std::ptrdiff_t>(all.idx(from, 0, 0, 0)),
              all.v.begin() +
                  static_cast<std::ptrdiff_t>(all.idx(from, 0, 0, 0)) +
                  static_cast<std::ptrdiff_t>(xb.v.size()),
              xb.v.begin());
    return xb;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate * std::pow(cfg.lr_gamma, epoch / cfg.lr_step);
    double clean_sum = 0.0, adv_sum = 0.0;
    int correct = 0;

    for (int from = 0; from < n; from += batch) {
      const int count = std::min(batch, n - from);
      Tensor4 xb = (count == n) ? all : slice(from, count);
      std::vector<double> yb(labels.begin() + from,
                             labels.begin() + from + count);

      BatchLoss clean =
          simnet_loss(params, xb, yb, cfg.label_smoothing, /*update=*/true);
      Tensor4 xadv = xb;
      for (std::size_t i = 0; i < xadv.v.size(); ++i)
        xadv.v[i] += cfg.fgsm_epsilon * sign_of(clean.input_grad.v[i]);
      BatchLoss adv =
          simnet_loss(params, xadv, yb, cfg.label_smoothing, /*update=*/true);

      check(std::isfinite(clean.loss) && std::isfinite(adv.loss),
            "simnet_train: loss became non-finite at epoch " +
                std::to_string(epoch));

      clean_sum += clean.loss * count;
      adv_sum += adv.loss * count;
      for (int i = 0; i < count; ++i) {
        bool predicted = clean.scores[static_cast<std::size_t>(i)] > 0.5;
        bool truth = yb[static_cast<std::size_t>(i)] > 0.5;
        if (predicted == truth) ++correct;
      }

      std::vector<Span> gc = grad_spans(clean.grads, params);
      std::vector<Span> ga = grad_spans(adv.grads, params);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
      std::size_t flat = 0;
      for (std::size_t si = 0; si < spans.size(); ++si) {
        double* p = spans[si].p;
        const double* g1 = gc[si].p;
        const double* g2 = ga[si].p;
        for (std::size_t k = 0; k < spans[si].n; ++k, ++flat) {
          const double g = 0.5 * (g1[k] + g2[k]);
          adam_m[flat] = cfg.beta1 * adam_m[flat] + (1.0 - cfg.beta1) * g;
          adam_v[flat] = cfg.beta2 * adam_v[flat] + (1.0 - cfg.beta2) * g * g;
          const double mhat = adam_m[flat] / c1;
          const double vhat = adam_v[flat] / c2;
          p[k] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                        cfg.weight_decay * p[k]);
        }
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.clean_loss = clean_sum / n;
    st.adv_loss = adv_sum / n;
    st.accuracy = double(correct) / n;
    result.history.push_back(st);
  }

  params.epochs_trained = cfg.epochs;
  return result;
}

// ---------- checkpoints ----------

namespace {

struct NamedTensor {
  std::string name;
  Matrix* m = nullptr;
  Vector* v = nullptr;
  double* s = nullptr;
};

std::vector<NamedTensor> checkpoint_tensors(SimNetParams& p) {
  std::vector<NamedTensor> out;
  auto mat = [&](const std::string& n, Matrix& m) {
    out.push_back({n, &m, nullptr, nullptr});
  };
  auto vec = [&](const std::string& n, Vector& v) {
    out.push_back({n, nullptr, &v, nullptr});
  };
  auto bn = [&](const std::string& base, BatchNormParams& b) {
    vec(base + ".gamma", b.gamma);
    vec(base + ".beta", b.beta);
    vec(base + ".running_mean", b.running_mean);
    vec(base + ".running_var", b.running_var);
  };
  mat("stem.conv.w", p.stem.weight);
  bn("stem.bn", p.stem_bn);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string base = "block" + std::to_string(i);
    mat(base + ".conv1.w", b.conv1.weight);
    bn(base + ".bn1", b.bn1);
    mat(base + ".conv2.w", b.conv2.weight);
    bn(base + ".bn2", b.bn2);
    if (b.has_projection) {
      mat(base + ".proj.w", b.proj.weight);
      bn(base + ".proj_bn", b.proj_bn);
    }
  }
  mat("fc.w", p.fc_w);
  out.push_back({"fc.b", nullptr, nullptr, &p.fc_b});
  return out;
}

}  // namespace

void save_simnet(const SimNetParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto& p = const_cast<SimNetParams&>(params);  // tensor listing only
  std::vector<NamedTensor> tensors = checkpoint_tensors(p);

  Json manifest;
  manifest["format_version"] = 1;
  manifest["n_f"] = params.n_f;
  manifest["h"] = params.h;
  manifest["widths"] = params.widths;
  manifest["epochs_trained"] = params.epochs_trained;
  Json names = Json::array();
  for (const auto& t : tensors) {
    const std::string file = t.name + ".mat";
    if (t.m) {
      write_matrix_file(dir / file, *t.m);
    } else if (t.v) {
      Matrix row(1, t.v->size());
      row.row(0) = t.v->transpose();
      write_matrix_file(dir / file, row);
    } else {
      Matrix one(1, 1);
      one(0, 0) = *t.s;
      write_matrix_file(dir / file, one);
    }
    names.push_back(file);
  }
  manifest["tensors"] = names;
  write_json_file(dir / "manifest.json", manifest);
}

SimNetParams load_simnet(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  check(std::filesystem::exists(manifest_path),
        "load_simnet: missing manifest " + manifest_path.string());
  Json manifest = read_json_file(manifest_path);
  const std::string where = "load_simnet " + manifest_path.string();
  int version = json_field(manifest, "format_version", where).get<int>();
  check(version == 1,
        where + ": unsupported format_version " + std::to_string(version));

  SimNetParams p = build_structure(
      json_field(manifest, "n_f", where).get<int>(),
      json_field(manifest, "h", where).get<int>(),
      json_field(manifest, "widths", where).get<std::vector<int>>());
  p.epochs_trained = json_field(manifest, "epochs_trained", where).get<int>();

  std::vector<NamedTensor> tensors = checkpoint_tensors(p);
  for (const auto& t : tensors) {
    Matrix m = read_matrix_file(dir / (t.name + ".mat"));
    if (t.m) {
      check(m.rows() == t.m->rows() && m.cols() == t.m->cols(),
            where + ": tensor " + t.name + " has unexpected shape");
      *t.m = m;
    } else if (t.v) {
      check(m.rows() == 1 && m.cols() == t.v->size(),
            where + ": tensor " + t.name + " has unexpected shape");
      *t.v = m.row(0).transpose();
    } else {
      check(m.rows() == 1 && m.cols() == 1,
            where + ": tensor " + t.name + " has unexpected shape");
      *t.s = m(0, 0);
    }
  }
  return p;
}

}  // namespace sfp
