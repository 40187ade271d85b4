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

#include <cmath>
#include <string>
#include <vector>

namespace attrgen {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer(const std::string& name);
const char* optimizer_name(OptimizerKind kind);

// Gradient-norm clipping followed by an SGD or Adam update.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double clip_norm)
      : kind_(kind), lr_(lr), clip_(clip_norm) {}

  // Returns the gradient norm before clipping.
  double step(std::vector<double>& params, std::vector<double>& grad);

  double lr() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_;
  double clip_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<double> m_, v_;
};

double l2_norm(const std::vector<double>& v);

}  // namespace attrgen
