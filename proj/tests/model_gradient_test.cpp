// Copyright 2026 The UltraDP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "gradient_cases.hpp"

namespace ultradp {
namespace {

using namespace fixtures;

class ModelGradient : public ::testing::TestWithParam<ModelGradientCase> {};

TEST_P(ModelGradient, MatchesCentralDifferences) {
  EXPECT_LE(GetParam().run(), kGradTolerance) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(Components, ModelGradient, ::testing::ValuesIn(model_gradient_cases()),
                         [](const ::testing::TestParamInfo<ModelGradientCase>& info) { return info.param.name; });

}  // namespace
}  // namespace ultradp
