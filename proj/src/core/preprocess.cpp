// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "preprocess.hpp"

#include <json.hpp>

#include "errors.hpp"

namespace pimtl {

Dataset preprocess_dataset(const Dataset& raw, const EnvelopeSettings& settings) {
  require(raw.kind == DatasetKind::kRaw, ErrorCode::kData, "preprocess expects a raw dataset");
  require(!raw.subjects.empty(), ErrorCode::kData, "dataset has no subjects");
  Dataset out;
  out.kind = DatasetKind::kEnvelope;
  out.fs = raw.fs;
  out.fs_emg = raw.fs;
  out.muscles = raw.muscles;
  out.subjects.reserve(raw.subjects.size());
  for (const SubjectRecord& src : raw.subjects) {
    SubjectRecord rec;
    rec.params = src.params;
    rec.calibration = src.calibration;
    const std::size_t muscles = raw.muscles.size();
    require(src.calibration.emg.cols == muscles, ErrorCode::kData,
            "subject " + std::to_string(src.params.id) + " calibration has wrong channel count");
    rec.mvc.resize(muscles);
    for (std::size_t n = 0; n < muscles; ++n) {
      const std::vector<double> cal = src.calibration.emg.column(n);
      rec.mvc[n] = mvc_reference(emg_envelope(cal, src.calibration.emg_fs, settings));
    }
    for (const Trial& tr : src.trials) {
      Trial t = tr;
      t.emg_fs = tr.fs;
      t.emg = Matrix(tr.samples(), muscles);
      for (std::size_t n = 0; n < muscles; ++n) {
        std::vector<double> env =
            preprocess_channel(tr.emg.column(n), tr.emg_fs, rec.mvc[n], tr.fs, settings);
        require(env.size() >= tr.samples(), ErrorCode::kLength,
                "trial " + tr.name + ": envelope shorter than kinematics");
        env.resize(tr.samples());
        t.emg.set_column(n, env);
      }
      rec.trials.push_back(std::move(t));
    }
    out.subjects.push_back(std::move(rec));
  }
  return out;
}

std::string preprocess_record_json(const Dataset& envelope, const EnvelopeSettings& settings) {
  nlohmann::ordered_json j;
  j["bandpass"] = {{"highpass_hz", settings.highpass_hz},
                   {"lowpass_hz", settings.lowpass_hz},
                   {"order", settings.bandpass_order},
                   {"type", "butterworth"},
                   {"zero_phase", true}};
  j["envelope"] = {{"lowpass_hz", settings.envelope_hz},
                   {"order", settings.envelope_order},
                   {"rectify", "full"}};
  j["clamp_max"] = settings.clamp_max;
  j["fs_out"] = envelope.fs;
  j["muscles"] = envelope.muscles;
  nlohmann::ordered_json mvc = nlohmann::ordered_json::object();
  for (const SubjectRecord& s : envelope.subjects) mvc[std::to_string(s.params.id)] = s.mvc;
  j["mvc"] = mvc;
  return j.dump(2) + "\n";
}

}  // namespace pimtl
