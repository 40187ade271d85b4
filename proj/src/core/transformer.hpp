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

#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace attrgen {

struct TransformerConfig {
  int vocab_size = 0;
  int image_dim = 0;
  int layers = 2;
  int width = 64;
  int heads = 4;
  int context = 64;
  int num_classes = 0;  // 0: tied language-model head; otherwise a classifier head
  double init_std = 0.05;

  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
  bool operator==(const TransformerConfig&) const = default;
};

// Intermediate values of a forward pass, kept for backprop and for
// incremental decoding. Row-major, `capacity` positions per tensor.
struct Activations {
  int capacity = 0;
  int length = 0;
  std::vector<double> x;  // (layers + 1) residual streams
  std::vector<double> ln1, ln1_mean, ln1_rstd;
  std::vector<double> qkv;
  std::vector<double> att;  // layers x heads x capacity x capacity
  std::vector<double> y;
  std::vector<double> xmid;
  std::vector<double> ln2, ln2_mean, ln2_rstd;
  std::vector<double> fc, act;
  std::vector<double> lnf, lnf_mean, lnf_rstd;
};

// Pre-LayerNorm causal transformer over [image slot, token, token, ...].
// Position 0 holds the projected image embedding; position p >= 1 holds
// tokens[p - 1]. Parameters live in one flat vector.
class Transformer {
 public:
  Transformer() = default;
  Transformer(const TransformerConfig& cfg, std::uint64_t seed);

  const TransformerConfig& config() const { return cfg_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  // Runs positions [acts.length, acts.length + n) given all tokens so far.
  void forward(const std::vector<double>& image, const std::vector<int>& tokens,
               Activations& acts) const;
  Activations forward(const std::vector<double>& image, const std::vector<int>& tokens) const;
  Activations make_activations(int capacity) const;

  // Tied-head logits at position t of a completed forward pass.
  std::vector<double> lm_logits(const Activations& acts, int t) const;
  // Classifier-head logits at the last position.
  std::vector<double> class_logits(const Activations& acts) const;

  // sum_p weights[p] * CE(lm_logits(p), targets[p]) over positions with a
  // nonzero weight. Accumulates the gradient into *grad when given.
  double token_loss(const std::vector<double>& image, const std::vector<int>& tokens,
                    const std::vector<int>& targets, const std::vector<double>& weights,
                    std::vector<double>* grad) const;

  // weight * CE(class_logits, label).
  double class_loss(const std::vector<double>& image, const std::vector<int>& tokens,
                    int label, double weight, std::vector<double>* grad) const;

  // Row of the token embedding table.
  std::vector<double> token_embedding(int id) const;

 private:
  struct LayerOffsets {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };
  struct Offsets {
    std::size_t tok_emb, pos_emb, img_w, img_b;
    std::vector<LayerOffsets> layers;
    std::size_t lnf_g, lnf_b, cls_w, cls_b, total;
  };

  void compute_offsets();
  void forward_position(const std::vector<double>& image, const std::vector<int>& tokens,
                        int t, Activations& a) const;
  void backward(const std::vector<double>& image, const std::vector<int>& tokens,
                const Activations& a, std::vector<double>& dlnf,
                std::vector<double>& grad) const;

  const double* p(std::size_t off) const { return params_.data() + off; }

  TransformerConfig cfg_;
  Offsets off_{};
  std::vector<double> params_;
};

// -log softmax(logits)[target], max-subtracted.
double softmax_cross_entropy(const std::vector<double>& logits, int target);
std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace attrgen
