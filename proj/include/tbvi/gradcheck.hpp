/* Copyright 2026 The tbvi Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "tbvi/common.hpp"
#include "tbvi/tensor.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tbvi {

struct NamedMatrix {
  std::string name;
  Matrix value;

  bool operator==(const NamedMatrix& other) const {
    return name == other.name && value.rows() == other.value.rows() && value.cols() == other.value.cols() &&
           value == other.value;
  }
};
using ParamList = std::vector<NamedMatrix>;

// max over coordinates of |analytic - numeric| / (|numeric| + 1e-12), with
// the numeric gradient from central differences of `f`.
double finite_diff_check(const std::function<double(const ParamList&)>& f, const ParamList& params,
                         const ParamList& analytic, double step = 1e-5);

// Same check for a tape-built scalar function of several matrix inputs: the
// analytic side is obtained by one backward pass through `build`.
using TapeFunction = std::function<Tensor(Tape&, std::span<const Tensor>)>;
double finite_diff_check(const TapeFunction& build, const std::vector<Matrix>& inputs,
                         double step = 1e-5);

}  // namespace tbvi
