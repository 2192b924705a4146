// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset directory layout:
//
//   manifest.json            version, kind, rates, muscle order, subjects
//   <trial>.bin              binary trial (see docs/formats.md)
//   <trial>.kin.csv/.emg.csv CSV encoding of the same arrays

#include <fstream>
#include <sstream>

#include "io_util.hpp"
#include "json.hpp"
#include "synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pimtl {

namespace {

constexpr std::string_view kTrialMagic = "PMTLTRL1";
constexpr std::uint32_t kTrialVersion = 1;

json subject_to_json(const SubjectParams& s) {
  return json{{"id", s.id},
              {"fmax", s.fmax},
              {"tau_act", s.tau_act},
              {"tau_deact", s.tau_deact},
              {"emg_gain", s.emg_gain},
              {"emg_noise_sd", s.emg_noise_sd},
              {"moment_arms", s.arms.r},
              {"dynamics",
               {{"inertia", s.dyn.inertia},
                {"damping", s.dyn.damping},
                {"mass", s.dyn.mass},
                {"com_length", s.dyn.com_length},
                {"gravity", s.dyn.gravity}}},
              {"rng_seed", s.rng_seed}};
}

SubjectParams subject_from_json(const json& j) {
  SubjectParams s;
  s.id = j.at("id").get<int>();
  s.fmax = j.at("fmax").get<std::vector<double>>();
  s.tau_act = j.at("tau_act").get<double>();
  s.tau_deact = j.at("tau_deact").get<double>();
  s.emg_gain = j.at("emg_gain").get<std::vector<double>>();
  s.emg_noise_sd = j.at("emg_noise_sd").get<double>();
  s.arms.r = j.at("moment_arms").get<std::vector<double>>();
  const json& d = j.at("dynamics");
  s.dyn.inertia = d.at("inertia").get<double>();
  s.dyn.damping = d.at("damping").get<double>();
  s.dyn.mass = d.at("mass").get<double>();
  s.dyn.com_length = d.at("com_length").get<double>();
  s.dyn.gravity = d.at("gravity").get<double>();
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return s;
}

std::vector<char> encode_trial(const Trial& t, std::size_t muscles) {
  ByteWriter w;
  w.put_bytes(kTrialMagic);
  w.put<std::uint32_t>(kTrialVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(muscles));
  w.put<std::uint64_t>(t.t.size());
  w.put<std::uint64_t>(t.emg.rows);
  w.put<double>(t.fs);
  w.put<double>(t.emg_fs);
  const std::uint8_t has_act = t.activation.empty() ? 0 : 1;
  w.put<std::uint8_t>(has_act);
  for (int i = 0; i < 7; ++i) w.put<std::uint8_t>(0);
  w.put_doubles(t.t);
  w.put_doubles(t.angle);
  w.put_doubles(t.forces.data);
  if (has_act) w.put_doubles(t.activation.data);
  w.put_doubles(t.emg.data);
  return w.bytes();
}

Trial decode_trial(const fs::path& path, const std::string& name) {
  const std::vector<char> bytes = read_file(path);
  ByteReader r(bytes, path.string());
  if (r.get_bytes(kTrialMagic.size()) != kTrialMagic) r.error("bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kTrialVersion) {
    fail(ErrorCode::kVersion, path.string() + ": trial version " + std::to_string(version) +
                                  ", expected " + std::to_string(kTrialVersion));
  }
  const auto muscles = r.get<std::uint32_t>();
  const auto samples = r.get<std::uint64_t>();
  const auto emg_samples = r.get<std::uint64_t>();
  Trial t;
  t.name = name;
  t.fs = r.get<double>();
  t.emg_fs = r.get<double>();
  const auto has_act = r.get<std::uint8_t>();
  r.get_bytes(7);
  // Guard allocation against corrupted sizes.
  const std::uint64_t expected =
      8ULL * (2 * samples + samples * muscles * (has_act ? 2 : 1) + emg_samples * muscles);
  if (expected > r.remaining()) r.error("array sizes exceed file length");
  t.t.resize(samples);
  t.angle.resize(samples);
  if (samples > 0) t.forces = Matrix(samples, muscles);
  r.get_doubles(t.t);
  r.get_doubles(t.angle);
  r.get_doubles(t.forces.data);
  if (has_act) {
    t.activation = Matrix(samples, muscles);
    r.get_doubles(t.activation.data);
  }
  t.emg = Matrix(emg_samples, muscles);
  r.get_doubles(t.emg.data);
  if (r.remaining() != 0) r.error("trailing bytes");
  return t;
}

std::string csv_header(const std::vector<std::string>& muscles, const char* prefix) {
  std::string h;
  for (std::size_t i = 0; i < muscles.size(); ++i) {
    if (i) h += ',';
    h += prefix + muscles[i];
  }
  return h;
}

std::string encode_kin_csv(const Trial& t, const std::vector<std::string>& muscles) {
  std::string out = "t,angle," + csv_header(muscles, "F_");
  if (!t.activation.empty()) out += "," + csv_header(muscles, "A_");
  out += '\n';
  for (std::size_t k = 0; k < t.t.size(); ++k) {
    out += format_double(t.t[k]);
    out += ',';
    out += format_double(t.angle[k]);
    for (double v : t.forces.row(k)) {
      out += ',';
      out += format_double(v);
    }
    if (!t.activation.empty()) {
      for (double v : t.activation.row(k)) {
        out += ',';
        out += format_double(v);
      }
    }
    out += '\n';
  }
  return out;
}

std::string encode_emg_csv(const Trial& t, const std::vector<std::string>& muscles) {
  std::string out = csv_header(muscles, "EMG_") + '\n';
  for (std::size_t k = 0; k < t.emg.rows; ++k) {
    const auto row = t.emg.row(k);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

// Parses a numeric CSV with a header line. Errors carry the byte offset.
std::vector<std::vector<double>> parse_csv(const fs::path& path, std::size_t expected_cols,
                                           std::vector<std::string>* header) {
  const std::string text = read_text_file(path);
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) {
      fail(ErrorCode::kParse, path.string() + ": unterminated line at byte offset " + std::to_string(pos));
    }
    const std::string_view line(text.data() + pos, eol - pos);
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() != expected_cols) {
      fail(ErrorCode::kParse, path.string() + ": expected " + std::to_string(expected_cols) +
                                  " columns, got " + std::to_string(cells.size()) +
                                  " at byte offset " + std::to_string(pos));
    }
    if (first) {
      if (header) {
        for (auto c : cells) header->emplace_back(c);
      }
      first = false;
    } else {
      std::vector<double> row;
      row.reserve(cells.size());
      for (auto c : cells) row.push_back(parse_double(c, path.string() + " byte offset " + std::to_string(pos)));
      rows.push_back(std::move(row));
    }
    pos = eol + 1;
  }
  if (first) fail(ErrorCode::kParse, path.string() + ": empty file at byte offset 0");
  return rows;
}

Trial decode_csv_trial(const fs::path& dir, const json& entry, std::size_t muscles, double fs,
                       double emg_fs) {
  Trial t;
  t.name = entry.at("name").get<std::string>();
  t.fs = entry.value("fs", fs);
  t.emg_fs = entry.value("emg_fs", emg_fs);
  const bool has_act = entry.value("has_activation", false);
  if (entry.contains("kin_file")) {
    const auto rows = parse_csv(dir / entry.at("kin_file").get<std::string>(),
                                2 + muscles * (has_act ? 2 : 1), nullptr);
    t.t.resize(rows.size());
    t.angle.resize(rows.size());
    t.forces = Matrix(rows.size(), muscles);
    if (has_act) t.activation = Matrix(rows.size(), muscles);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      t.t[k] = rows[k][0];
      t.angle[k] = rows[k][1];
      for (std::size_t c = 0; c < muscles; ++c) t.forces(k, c) = rows[k][2 + c];
      if (has_act) {
        for (std::size_t c = 0; c < muscles; ++c) t.activation(k, c) = rows[k][2 + muscles + c];
      }
    }
  }
  const auto rows = parse_csv(dir / entry.at("emg_file").get<std::string>(), muscles, nullptr);
  t.emg = Matrix(rows.size(), muscles);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t c = 0; c < muscles; ++c) t.emg(k, c) = rows[k][c];
  }
  return t;
}

json write_trial(const Trial& t, const fs::path& dir, const std::vector<std::string>& muscles,
                 Encoding encoding) {
  json entry{{"name", t.name}, {"samples", t.t.size()}, {"emg_samples", t.emg.rows},
             {"has_activation", !t.activation.empty()},
             {"fs", t.fs},
             {"emg_fs", t.emg_fs}};
  if (encoding == Encoding::kBinary) {
    const std::string file = t.name + ".bin";
    const std::vector<char> bytes = encode_trial(t, muscles.size());
    atomic_write_file(dir / file, std::span<const char>(bytes));
    entry["file"] = file;
  } else {
    if (!t.t.empty()) {
      const std::string kin = t.name + ".kin.csv";
      atomic_write_text(dir / kin, encode_kin_csv(t, muscles));
      entry["kin_file"] = kin;
    }
    const std::string emg = t.name + ".emg.csv";
    atomic_write_text(dir / emg, encode_emg_csv(t, muscles));
    entry["emg_file"] = emg;
  }
  return entry;
}

Trial read_trial(const json& entry, const fs::path& dir, std::size_t muscles, double fs,
                 double emg_fs, Encoding encoding) {
  Trial t = encoding == Encoding::kBinary
                ? decode_trial(dir / entry.at("file").get<std::string>(), entry.at("name").get<std::string>())
                : decode_csv_trial(dir, entry, muscles, fs, emg_fs);
  if (t.t.size() != entry.at("samples").get<std::size_t>() ||
      t.emg.rows != entry.at("emg_samples").get<std::size_t>() || t.emg.cols != muscles) {
    fail(ErrorCode::kParse, "trial " + t.name + " does not match its manifest entry");
  }
  return t;
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir, Encoding encoding,
                   const std::map<std::string, std::string>& extra_files) {
  const fs::path staging = make_staging_dir(dir);
  try {
    json manifest;
    manifest["format"] = "pimtl-dataset";
    manifest["version"] = kDatasetVersion;
    manifest["kind"] = dataset.kind == DatasetKind::kRaw ? "raw" : "envelope";
    manifest["encoding"] = encoding == Encoding::kBinary ? "binary" : "csv";
    manifest["fs"] = dataset.fs;
    manifest["fs_emg"] = dataset.fs_emg;
    manifest["muscles"] = dataset.muscles;
    json ids = json::array();
    json subjects = json::array();
    for (const SubjectRecord& rec : dataset.subjects) {
      ids.push_back(rec.params.id);
      json s;
      s["params"] = subject_to_json(rec.params);
      json trials = json::array();
      for (const Trial& t : rec.trials) trials.push_back(write_trial(t, staging, dataset.muscles, encoding));
      s["trials"] = trials;
      if (!rec.calibration.emg.empty()) {
        s["calibration"] = write_trial(rec.calibration, staging, dataset.muscles, encoding);
      }
      if (!rec.mvc.empty()) s["mvc"] = rec.mvc;
      subjects.push_back(s);
    }
    manifest["subject_ids"] = ids;
    manifest["subjects"] = subjects;
    atomic_write_text(staging / "manifest.json", manifest.dump(2) + "\n");
    for (const auto& [name, text] : extra_files) atomic_write_text(staging / name, text);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  commit_staging_dir(staging, dir);
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  require(fs::exists(manifest_path), ErrorCode::kIo, "no manifest.json in " + dir.string());
  const std::string text = read_text_file(manifest_path);
  json m;
  try {
    m = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, manifest_path.string() + ": " + e.what() + " (byte offset " +
                                std::to_string(e.byte) + ")");
  }
  try {
    if (m.value("format", std::string()) != "pimtl-dataset") {
      fail(ErrorCode::kParse, manifest_path.string() + ": not a pimtl dataset manifest");
    }
    const int version = m.at("version").get<int>();
    if (version != kDatasetVersion) {
      fail(ErrorCode::kVersion, manifest_path.string() + ": dataset version " + std::to_string(version) +
                                    ", expected " + std::to_string(kDatasetVersion));
    }
    Dataset ds;
    const std::string kind = m.at("kind").get<std::string>();
    require(kind == "raw" || kind == "envelope", ErrorCode::kParse, "unknown dataset kind " + kind);
    ds.kind = kind == "raw" ? DatasetKind::kRaw : DatasetKind::kEnvelope;
    const std::string enc = m.at("encoding").get<std::string>();
    require(enc == "binary" || enc == "csv", ErrorCode::kParse, "unknown encoding " + enc);
    const Encoding encoding = enc == "binary" ? Encoding::kBinary : Encoding::kCsv;
    ds.fs = m.at("fs").get<double>();
    ds.fs_emg = m.at("fs_emg").get<double>();
    ds.muscles = m.at("muscles").get<std::vector<std::string>>();
    const std::size_t muscles = ds.muscles.size();
    for (const json& s : m.at("subjects")) {
      SubjectRecord rec;
      rec.params = subject_from_json(s.at("params"));
      for (const json& t : s.at("trials")) {
        rec.trials.push_back(read_trial(t, dir, muscles, ds.fs, ds.fs_emg, encoding));
      }
      if (s.contains("calibration")) {
        rec.calibration = read_trial(s.at("calibration"), dir, muscles, ds.fs, ds.fs_emg, encoding);
      }
      if (s.contains("mvc")) rec.mvc = s.at("mvc").get<std::vector<double>>();
      ds.subjects.push_back(std::move(rec));
    }
    return ds;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, manifest_path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace pimtl
