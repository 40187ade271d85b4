/*
 * Copyright (c) 2026, The attrgen Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "transformer.hpp"

#include <algorithm>
#include <cmath>

#include "common.hpp"

namespace attrgen {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

// y = x W + b for one row; W is in x out, row-major.
inline void affine(const double* x, int in, const double* w, const double* b, int out,
                   double* y) {
  for (int j = 0; j < out; ++j) y[j] = b[j];
  for (int i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* row = w + static_cast<std::size_t>(i) * out;
    for (int j = 0; j < out; ++j) y[j] += xi * row[j];
  }
}

// dx += dy W^T, dW += x^T dy, db += dy.
inline void affine_backward(const double* x, int in, const double* w, int out, const double* dy,
                            double* dx, double* dw, double* db) {
  for (int j = 0; j < out; ++j) db[j] += dy[j];
  for (int i = 0; i < in; ++i) {
    const double* row = w + static_cast<std::size_t>(i) * out;
    double* drow = dw + static_cast<std::size_t>(i) * out;
    const double xi = x[i];
    double acc = 0;
    for (int j = 0; j < out; ++j) {
      acc += dy[j] * row[j];
      drow[j] += xi * dy[j];
    }
    if (dx) dx[i] += acc;
  }
}

inline void layer_norm(const double* x, int n, const double* g, const double* b, double* y,
                       double& mean, double& rstd) {
  double m = 0;
  for (int i = 0; i < n; ++i) m += x[i];
  m /= n;
  double v = 0;
  for (int i = 0; i < n; ++i) v += (x[i] - m) * (x[i] - m);
  v /= n;
  const double r = 1.0 / std::sqrt(v + kLnEps);
  for (int i = 0; i < n; ++i) y[i] = g[i] * (x[i] - m) * r + b[i];
  mean = m;
  rstd = r;
}

// dx += LN'(dy); dg, db accumulated.
inline void layer_norm_backward(const double* x, int n, const double* g, double mean, double rstd,
                                const double* dy, double* dx, double* dg, double* db) {
  double sum_d = 0, sum_dx = 0;
  for (int i = 0; i < n; ++i) {
    const double xhat = (x[i] - mean) * rstd;
    const double d = dy[i] * g[i];
    dg[i] += dy[i] * xhat;
    db[i] += dy[i];
    sum_d += d;
    sum_dx += d * xhat;
  }
  sum_d /= n;
  sum_dx /= n;
  for (int i = 0; i < n; ++i) {
    const double xhat = (x[i] - mean) * rstd;
    dx[i] += rstd * (dy[i] * g[i] - sum_d - xhat * sum_dx);
  }
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

}  // namespace

void TransformerConfig::validate() const {
  if (vocab_size <= 0) fail(ErrorCode::kConfiguration, "vocab_size must be positive");
  if (image_dim <= 0) fail(ErrorCode::kConfiguration, "image_dim must be positive");
  if (layers <= 0 || width <= 0 || heads <= 0 || context < 2) {
    fail(ErrorCode::kConfiguration, "layers, width, heads must be positive and context >= 2");
  }
  if (width % heads != 0) fail(ErrorCode::kConfiguration, "width must be divisible by heads");
  if (num_classes < 0 || num_classes == 1) {
    fail(ErrorCode::kConfiguration, "num_classes must be 0 (language model) or >= 2");
  }
  if (!(init_std > 0)) fail(ErrorCode::kConfiguration, "init_std must be positive");
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"image_dim", image_dim}, {"layers", layers},
          {"width", width},           {"heads", heads},         {"context", context},
          {"num_classes", num_classes}, {"init_std", init_std}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.image_dim = j.value("image_dim", c.image_dim);
  c.layers = j.value("layers", c.layers);
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.context = j.value("context", c.context);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.init_std = j.value("init_std", c.init_std);
  return c;
}

Transformer::Transformer(const TransformerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  compute_offsets();
  params_.assign(off_.total, 0.0);
  Rng rng(seed);
  const int h = cfg_.width, F = 4 * h;
  const double std = cfg_.init_std;
  const double proj_std = std / std::sqrt(2.0 * cfg_.layers);
  auto fill = [&](std::size_t off, std::size_t n, double s) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = s * rng.normal();
  };
  auto ones = [&](std::size_t off, std::size_t n) {
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(off), n, 1.0);
  };
  fill(off_.tok_emb, static_cast<std::size_t>(cfg_.vocab_size) * h, std);
  fill(off_.pos_emb, static_cast<std::size_t>(cfg_.context) * h, std);
  fill(off_.img_w, static_cast<std::size_t>(cfg_.image_dim) * h, std);
  for (const auto& L : off_.layers) {
    ones(L.ln1_g, h);
    fill(L.w_qkv, static_cast<std::size_t>(h) * 3 * h, std);
    fill(L.w_o, static_cast<std::size_t>(h) * h, proj_std);
    ones(L.ln2_g, h);
    fill(L.w_fc, static_cast<std::size_t>(h) * F, std);
    fill(L.w_proj, static_cast<std::size_t>(F) * h, proj_std);
  }
  ones(off_.lnf_g, h);
  if (cfg_.num_classes > 0) {
    fill(off_.cls_w, static_cast<std::size_t>(h) * cfg_.num_classes, std);
  }
}

void Transformer::compute_offsets() {
  const std::size_t h = cfg_.width, F = 4 * h;
  std::size_t o = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = o;
    o += n;
    return at;
  };
  off_.tok_emb = take(static_cast<std::size_t>(cfg_.vocab_size) * h);
  off_.pos_emb = take(static_cast<std::size_t>(cfg_.context) * h);
  off_.img_w = take(static_cast<std::size_t>(cfg_.image_dim) * h);
  off_.img_b = take(h);
  off_.layers.clear();
  for (int l = 0; l < cfg_.layers; ++l) {
    LayerOffsets L{};
    L.ln1_g = take(h);
    L.ln1_b = take(h);
    L.w_qkv = take(h * 3 * h);
    L.b_qkv = take(3 * h);
    L.w_o = take(h * h);
    L.b_o = take(h);
    L.ln2_g = take(h);
    L.ln2_b = take(h);
    L.w_fc = take(h * F);
    L.b_fc = take(F);
    L.w_proj = take(F * h);
    L.b_proj = take(h);
    off_.layers.push_back(L);
  }
  off_.lnf_g = take(h);
  off_.lnf_b = take(h);
  const std::size_t nc = static_cast<std::size_t>(cfg_.num_classes);
  off_.cls_w = take(h * nc);
  off_.cls_b = take(nc);
  off_.total = o;
}

Activations Transformer::make_activations(int capacity) const {
  const std::size_t C = capacity, h = cfg_.width, L = cfg_.layers, H = cfg_.heads;
  Activations a;
  a.capacity = capacity;
  a.x.assign((L + 1) * C * h, 0.0);
  a.ln1.assign(L * C * h, 0.0);
  a.ln1_mean.assign(L * C, 0.0);
  a.ln1_rstd.assign(L * C, 0.0);
  a.qkv.assign(L * C * 3 * h, 0.0);
  a.att.assign(L * H * C * C, 0.0);
  a.y.assign(L * C * h, 0.0);
  a.xmid.assign(L * C * h, 0.0);
  a.ln2.assign(L * C * h, 0.0);
  a.ln2_mean.assign(L * C, 0.0);
  a.ln2_rstd.assign(L * C, 0.0);
  a.fc.assign(L * C * 4 * h, 0.0);
  a.act.assign(L * C * 4 * h, 0.0);
  a.lnf.assign(C * h, 0.0);
  a.lnf_mean.assign(C, 0.0);
  a.lnf_rstd.assign(C, 0.0);
  return a;
}

void Transformer::forward_position(const std::vector<double>& image,
                                   const std::vector<int>& tokens, int t,
                                   Activations& a) const {
  const int h = cfg_.width, F = 4 * h, H = cfg_.heads, dh = h / H, C = a.capacity;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto row = [&](std::vector<double>& v, int l, int width) {
    return v.data() + (static_cast<std::size_t>(l) * C + t) * width;
  };

  double* x0 = row(a.x, 0, h);
  if (t == 0) {
    affine(image.data(), cfg_.image_dim, p(off_.img_w), p(off_.img_b), h, x0);
  } else {
    const int id = tokens[t - 1];
    if (id < 0 || id >= cfg_.vocab_size) fail(ErrorCode::kIndex, "token id out of range");
    const double* e = p(off_.tok_emb) + static_cast<std::size_t>(id) * h;
    for (int j = 0; j < h; ++j) x0[j] = e[j];
  }
  const double* pe = p(off_.pos_emb) + static_cast<std::size_t>(t) * h;
  for (int j = 0; j < h; ++j) x0[j] += pe[j];

  for (int l = 0; l < cfg_.layers; ++l) {
    const auto& L = off_.layers[l];
    const double* xin = row(a.x, l, h);
    double* ln1 = row(a.ln1, l, h);
    layer_norm(xin, h, p(L.ln1_g), p(L.ln1_b), ln1, a.ln1_mean[l * C + t], a.ln1_rstd[l * C + t]);
    double* qkv = row(a.qkv, l, 3 * h);
    affine(ln1, h, p(L.w_qkv), p(L.b_qkv), 3 * h, qkv);

    double* y = row(a.y, l, h);
    const double* qkv_l = a.qkv.data() + static_cast<std::size_t>(l) * C * 3 * h;
    for (int hd = 0; hd < H; ++hd) {
      double* att = a.att.data() + ((static_cast<std::size_t>(l) * H + hd) * C + t) * C;
      const double* q = qkv + hd * dh;
      double mx = -1e300;
      for (int s = 0; s <= t; ++s) {
        const double* k = qkv_l + static_cast<std::size_t>(s) * 3 * h + h + hd * dh;
        double dot = 0;
        for (int j = 0; j < dh; ++j) dot += q[j] * k[j];
        att[s] = dot * scale;
        mx = std::max(mx, att[s]);
      }
      double sum = 0;
      for (int s = 0; s <= t; ++s) {
        att[s] = std::exp(att[s] - mx);
        sum += att[s];
      }
      for (int s = 0; s <= t; ++s) att[s] /= sum;
      double* yh = y + hd * dh;
      for (int j = 0; j < dh; ++j) yh[j] = 0;
      for (int s = 0; s <= t; ++s) {
        const double* v = qkv_l + static_cast<std::size_t>(s) * 3 * h + 2 * h + hd * dh;
        for (int j = 0; j < dh; ++j) yh[j] += att[s] * v[j];
      }
    }

    double* xmid = row(a.xmid, l, h);
    affine(y, h, p(L.w_o), p(L.b_o), h, xmid);
    for (int j = 0; j < h; ++j) xmid[j] += xin[j];

    double* ln2 = row(a.ln2, l, h);
    layer_norm(xmid, h, p(L.ln2_g), p(L.ln2_b), ln2, a.ln2_mean[l * C + t], a.ln2_rstd[l * C + t]);
    double* fc = row(a.fc, l, F);
    double* act = row(a.act, l, F);
    affine(ln2, h, p(L.w_fc), p(L.b_fc), F, fc);
    for (int j = 0; j < F; ++j) act[j] = gelu(fc[j]);
    double* xout = row(a.x, l + 1, h);
    affine(act, F, p(L.w_proj), p(L.b_proj), h, xout);
    for (int j = 0; j < h; ++j) xout[j] += xmid[j];
  }

  layer_norm(row(a.x, cfg_.layers, h), h, p(off_.lnf_g), p(off_.lnf_b),
             a.lnf.data() + static_cast<std::size_t>(t) * h, a.lnf_mean[t], a.lnf_rstd[t]);
}

void Transformer::forward(const std::vector<double>& image, const std::vector<int>& tokens,
                          Activations& acts) const {
  if (static_cast<int>(image.size()) != cfg_.image_dim) {
    fail(ErrorCode::kShape, "image embedding has dimension " + std::to_string(image.size()) +
                                ", model expects " + std::to_string(cfg_.image_dim));
  }
  const int total = 1 + static_cast<int>(tokens.size());
  if (total > cfg_.context || total > acts.capacity) {
    fail(ErrorCode::kLength, "sequence of " + std::to_string(total) +
                                 " positions exceeds the context of " +
                                 std::to_string(std::min(cfg_.context, acts.capacity)));
  }
  for (int t = acts.length; t < total; ++t) forward_position(image, tokens, t, acts);
  acts.length = total;
}

Activations Transformer::forward(const std::vector<double>& image,
                                 const std::vector<int>& tokens) const {
  Activations a = make_activations(1 + static_cast<int>(tokens.size()));
  forward(image, tokens, a);
  return a;
}

std::vector<double> Transformer::lm_logits(const Activations& acts, int t) const {
  const int h = cfg_.width, V = cfg_.vocab_size;
  const double* xf = acts.lnf.data() + static_cast<std::size_t>(t) * h;
  std::vector<double> logits(V);
  for (int v = 0; v < V; ++v) {
    const double* e = p(off_.tok_emb) + static_cast<std::size_t>(v) * h;
    double dot = 0;
    for (int j = 0; j < h; ++j) dot += xf[j] * e[j];
    logits[v] = dot;
  }
  return logits;
}

std::vector<double> Transformer::class_logits(const Activations& acts) const {
  if (cfg_.num_classes == 0) fail(ErrorCode::kConfiguration, "model has no classifier head");
  const int h = cfg_.width;
  std::vector<double> out(cfg_.num_classes);
  affine(acts.lnf.data() + static_cast<std::size_t>(acts.length - 1) * h, h, p(off_.cls_w),
         p(off_.cls_b), cfg_.num_classes, out.data());
  return out;
}

std::vector<double> Transformer::token_embedding(int id) const {
  const double* e = p(off_.tok_emb) + static_cast<std::size_t>(id) * cfg_.width;
  return std::vector<double>(e, e + cfg_.width);
}

void Transformer::backward(const std::vector<double>& image, const std::vector<int>& tokens,
                           const Activations& a, std::vector<double>& dlnf,
                           std::vector<double>& grad) const {
  const int h = cfg_.width, F = 4 * h, H = cfg_.heads, dh = h / H, C = a.capacity;
  const int T = a.length;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  double* g = grad.data();
  auto crow = [&](const std::vector<double>& v, int l, int t, int width) {
    return v.data() + (static_cast<std::size_t>(l) * C + t) * width;
  };

  std::vector<double> dx(static_cast<std::size_t>(T) * h, 0.0);
  for (int t = 0; t < T; ++t) {
    layer_norm_backward(crow(a.x, cfg_.layers, t, h), h, p(off_.lnf_g), a.lnf_mean[t],
                        a.lnf_rstd[t], dlnf.data() + static_cast<std::size_t>(t) * h,
                        dx.data() + static_cast<std::size_t>(t) * h, g + off_.lnf_g,
                        g + off_.lnf_b);
  }

  std::vector<double> dact(static_cast<std::size_t>(T) * F);
  std::vector<double> dmid(static_cast<std::size_t>(T) * h);
  std::vector<double> dy(static_cast<std::size_t>(T) * h);
  std::vector<double> dqkv(static_cast<std::size_t>(T) * 3 * h);
  std::vector<double> dln(static_cast<std::size_t>(T) * 3 * h);
  std::vector<double> dp(static_cast<std::size_t>(T));

  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const auto& L = off_.layers[l];
    // MLP branch.
    std::fill(dact.begin(), dact.end(), 0.0);
    for (int t = 0; t < T; ++t) {
      affine_backward(crow(a.act, l, t, F), F, p(L.w_proj), h, dx.data() + t * h,
                      dact.data() + static_cast<std::size_t>(t) * F, g + L.w_proj, g + L.b_proj);
    }
    std::fill(dln.begin(), dln.end(), 0.0);
    dmid = dx;
    for (int t = 0; t < T; ++t) {
      double* dfc = dact.data() + static_cast<std::size_t>(t) * F;
      const double* fc = crow(a.fc, l, t, F);
      for (int j = 0; j < F; ++j) dfc[j] *= gelu_grad(fc[j]);
      double* dln2 = dln.data() + static_cast<std::size_t>(t) * h;
      affine_backward(crow(a.ln2, l, t, h), h, p(L.w_fc), F, dfc, dln2, g + L.w_fc, g + L.b_fc);
      layer_norm_backward(crow(a.xmid, l, t, h), h, p(L.ln2_g), a.ln2_mean[l * C + t],
                          a.ln2_rstd[l * C + t], dln2, dmid.data() + t * h, g + L.ln2_g,
                          g + L.ln2_b);
    }

    // Attention branch.
    std::fill(dy.begin(), dy.end(), 0.0);
    for (int t = 0; t < T; ++t) {
      affine_backward(crow(a.y, l, t, h), h, p(L.w_o), h, dmid.data() + t * h, dy.data() + t * h,
                      g + L.w_o, g + L.b_o);
    }
    std::fill(dqkv.begin(), dqkv.end(), 0.0);
    const double* qkv_l = a.qkv.data() + static_cast<std::size_t>(l) * C * 3 * h;
    for (int hd = 0; hd < H; ++hd) {
      for (int t = 0; t < T; ++t) {
        const double* att = a.att.data() + ((static_cast<std::size_t>(l) * H + hd) * C + t) * C;
        const double* dyh = dy.data() + static_cast<std::size_t>(t) * h + hd * dh;
        double sum = 0;
        for (int s = 0; s <= t; ++s) {
          const double* v = qkv_l + static_cast<std::size_t>(s) * 3 * h + 2 * h + hd * dh;
          double d = 0;
          for (int j = 0; j < dh; ++j) d += dyh[j] * v[j];
          dp[s] = d;
          sum += att[s] * d;
        }
        const double* q = qkv_l + static_cast<std::size_t>(t) * 3 * h + hd * dh;
        double* dq = dqkv.data() + static_cast<std::size_t>(t) * 3 * h + hd * dh;
        for (int s = 0; s <= t; ++s) {
          const double ds = att[s] * (dp[s] - sum) * scale;
          const double* k = qkv_l + static_cast<std::size_t>(s) * 3 * h + h + hd * dh;
          double* dk = dqkv.data() + static_cast<std::size_t>(s) * 3 * h + h + hd * dh;
          double* dv = dqkv.data() + static_cast<std::size_t>(s) * 3 * h + 2 * h + hd * dh;
          for (int j = 0; j < dh; ++j) {
            dq[j] += ds * k[j];
            dk[j] += ds * q[j];
            dv[j] += att[s] * dyh[j];
          }
        }
      }
    }
    dx = dmid;
    std::fill(dln.begin(), dln.end(), 0.0);
    for (int t = 0; t < T; ++t) {
      double* dln1 = dln.data() + static_cast<std::size_t>(t) * h;
      affine_backward(crow(a.ln1, l, t, h), h, p(L.w_qkv), 3 * h,
                      dqkv.data() + static_cast<std::size_t>(t) * 3 * h, dln1, g + L.w_qkv,
                      g + L.b_qkv);
      layer_norm_backward(crow(a.x, l, t, h), h, p(L.ln1_g), a.ln1_mean[l * C + t],
                          a.ln1_rstd[l * C + t], dln1, dx.data() + t * h, g + L.ln1_g,
                          g + L.ln1_b);
    }
  }

  // Embeddings.
  affine_backward(image.data(), cfg_.image_dim, p(off_.img_w), h, dx.data(), nullptr,
                  g + off_.img_w, g + off_.img_b);
  for (int t = 0; t < T; ++t) {
    const double* d = dx.data() + static_cast<std::size_t>(t) * h;
    double* dpos = g + off_.pos_emb + static_cast<std::size_t>(t) * h;
    for (int j = 0; j < h; ++j) dpos[j] += d[j];
    if (t > 0) {
      double* de = g + off_.tok_emb + static_cast<std::size_t>(tokens[t - 1]) * h;
      for (int j = 0; j < h; ++j) de[j] += d[j];
    }
  }
}

double Transformer::token_loss(const std::vector<double>& image, const std::vector<int>& tokens,
                               const std::vector<int>& targets,
                               const std::vector<double>& weights,
                               std::vector<double>* grad) const {
  if (cfg_.num_classes != 0) fail(ErrorCode::kConfiguration, "model has no language-model head");
  const int T = 1 + static_cast<int>(tokens.size());
  if (static_cast<int>(targets.size()) != T || static_cast<int>(weights.size()) != T) {
    fail(ErrorCode::kShape, "targets and weights need one entry per position");
  }
  if (grad && grad->size() != params_.size()) grad->assign(params_.size(), 0.0);
  const Activations a = forward(image, tokens);
  const int h = cfg_.width, V = cfg_.vocab_size;
  std::vector<double> dlnf;
  if (grad) dlnf.assign(static_cast<std::size_t>(T) * h, 0.0);
  double loss = 0;
  bool any = false;
  for (int t = 0; t < T; ++t) {
    const double w = weights[t];
    if (w == 0.0) continue;
    if (targets[t] < 0 || targets[t] >= V) fail(ErrorCode::kIndex, "target id out of range");
    any = true;
    const auto logits = lm_logits(a, t);
    loss += w * softmax_cross_entropy(logits, targets[t]);
    if (!grad) continue;
    auto prob = softmax(logits);
    prob[targets[t]] -= 1.0;
    const double* xf = a.lnf.data() + static_cast<std::size_t>(t) * h;
    double* dxf = dlnf.data() + static_cast<std::size_t>(t) * h;
    double* g = grad->data() + off_.tok_emb;
    for (int v = 0; v < V; ++v) {
      const double d = w * prob[v];
      const double* e = p(off_.tok_emb) + static_cast<std::size_t>(v) * h;
      double* ge = g + static_cast<std::size_t>(v) * h;
      for (int j = 0; j < h; ++j) {
        dxf[j] += d * e[j];
        ge[j] += d * xf[j];
      }
    }
  }
  if (grad && any) backward(image, tokens, a, dlnf, *grad);
  return loss;
}

double Transformer::class_loss(const std::vector<double>& image, const std::vector<int>& tokens,
                               int label, double weight, std::vector<double>* grad) const {
  if (cfg_.num_classes == 0) fail(ErrorCode::kConfiguration, "model has no classifier head");
  if (label < 0 || label >= cfg_.num_classes) fail(ErrorCode::kIndex, "label out of range");
  if (grad && grad->size() != params_.size()) grad->assign(params_.size(), 0.0);
  const Activations a = forward(image, tokens);
  const auto logits = class_logits(a);
  const double loss = weight * softmax_cross_entropy(logits, label);
  if (!grad || weight == 0.0) return loss;
  const int h = cfg_.width, T = a.length, NC = cfg_.num_classes;
  auto prob = softmax(logits);
  prob[label] -= 1.0;
  for (auto& d : prob) d *= weight;
  std::vector<double> dlnf(static_cast<std::size_t>(T) * h, 0.0);
  affine_backward(a.lnf.data() + static_cast<std::size_t>(T - 1) * h, h, p(off_.cls_w), NC,
                  prob.data(), dlnf.data() + static_cast<std::size_t>(T - 1) * h,
                  grad->data() + off_.cls_w, grad->data() + off_.cls_b);
  backward(image, tokens, a, dlnf, *grad);
  return loss;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double softmax_cross_entropy(const std::vector<double>& logits, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    fail(ErrorCode::kIndex, "target index " + std::to_string(target) + " out of range for " +
                                std::to_string(logits.size()) + " logits");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double x : logits) sum += std::exp(x - mx);
  return std::log(sum) - (logits[target] - mx);
}

}  // namespace attrgen
