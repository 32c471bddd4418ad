// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dethub/core/tensor.hpp"

namespace dethub::data {

// Binary PPM (P6), 8-bit. Values are mapped between [0,1] doubles and bytes.
void write_ppm(const std::string& path, const Tensor& image_hwc);
Tensor read_ppm(const std::string& path);

}  // namespace dethub::data
