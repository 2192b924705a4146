// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "sigproc.hpp"
#include "synth.hpp"

namespace pimtl {

// Raw dataset -> envelope dataset at the kinematic rate. Per-subject MVC
// references come from each subject's calibration recording; calibration
// trials are kept raw.
Dataset preprocess_dataset(const Dataset& raw, const EnvelopeSettings& settings);

// JSON provenance record (filter orders, corners, MVC values).
std::string preprocess_record_json(const Dataset& envelope, const EnvelopeSettings& settings);

}  // namespace pimtl
