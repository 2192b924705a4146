// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "io_util.hpp"

namespace pimtl {

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, std::size_t min_len,
                const char* what) {
  require(y.size() == yhat.size(), ErrorCode::kDimension,
          std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " vs " +
              std::to_string(yhat.size()) + ")");
  require(y.size() >= min_len, ErrorCode::kDimension,
          std::string(what) + ": needs at least " + std::to_string(min_len) + " samples");
}

}  // namespace

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, 1, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(sum / static_cast<double>(y.size()));
}

double pearson_cc(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, 2, "pearson_cc");
  const double n = static_cast<double>(y.size());
  double my = 0.0, mh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i];
    mh += yhat[i];
  }
  my /= n;
  mh /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my;
    const double b = yhat[i] - mh;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  require(sxx > 0.0 && syy > 0.0, ErrorCode::kUndefined,
          "pearson_cc: correlation is undefined for a constant sequence");
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

double normalized_rmse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, 1, "normalized_rmse");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  require(range > 0.0, ErrorCode::kUndefined, "normalized_rmse: ground truth has zero range");
  return rmse(y, yhat) / range;
}

EvaluationRecord evaluate_predictions(const TestPredictions& preds, const std::vector<std::string>& muscles) {
  const std::size_t outs = preds.outputs;
  require(outs == muscles.size() + 1, ErrorCode::kDimension,
          "evaluation: prediction columns do not match the muscle list");
  require(preds.rows >= 2, ErrorCode::kData, "evaluation: test split has fewer than 2 windows");
  EvaluationRecord rec;
  rec.truth.assign(outs, {});
  rec.predicted.assign(outs, {});
  constexpr double kDeg = 180.0 / std::numbers::pi;
  for (std::size_t k = 0; k < outs; ++k) {
    // report order: angle (model column N) first, then the muscles
    const std::size_t col = k == 0 ? outs - 1 : k - 1;
    const double scale = k == 0 ? kDeg : 1.0;
    auto& t = rec.truth[k];
    auto& p = rec.predicted[k];
    t.reserve(preds.rows);
    p.reserve(preds.rows);
    for (std::size_t r = 0; r < preds.rows; ++r) {
      t.push_back(preds.truth[r * outs + col] * scale);
      p.push_back(preds.predicted[r * outs + col] * scale);
    }
    OutputMetrics m;
    m.name = k == 0 ? "angle" : muscles[k - 1];
    m.unit = k == 0 ? "deg" : "N";
    m.rmse = rmse(t, p);
    m.cc = pearson_cc(t, p);
    m.nrmse = normalized_rmse(t, p);
    rec.outputs.push_back(m);
  }
  return rec;
}

std::vector<TimingRow> timing_report(const std::vector<EvaluationRecord>& records) {
  std::vector<TimingRow> rows;
  for (const EvaluationRecord& r : records) {
    rows.push_back({r.method, r.scenario, r.seed, r.fraction,
                    r.timing_phase.empty() ? std::string("full") : r.timing_phase,
                    r.wall_seconds / 60.0});
  }
  return rows;
}

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(ids[i]);
  }
  return s;
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

constexpr const char* kMetricsHeader =
    "method,scenario,seed,fraction,generic_subjects,heldout,output,unit,rmse,cc,nrmse,split_hash";

}  // namespace

std::string metrics_csv(const std::vector<EvaluationRecord>& records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const EvaluationRecord& r : records) {
    for (const OutputMetrics& m : r.outputs) {
      out += r.method + ',' + r.scenario + ',' + std::to_string(r.seed) + ',' + format_double(r.fraction) +
             ',' + join_ids(r.generic_subjects) + ',' + std::to_string(r.heldout) + ',' + m.name + ',' +
             m.unit + ',' + format_double(m.rmse) + ',' + format_double(m.cc) + ',' +
             format_double(m.nrmse) + ',' + r.split_hash + '\n';
    }
  }
  return out;
}

std::vector<EvaluationRecord> parse_metrics_csv(std::string_view text) {
  std::vector<EvaluationRecord> records;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    const std::size_t offset = pos;
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      require(line == kMetricsHeader, ErrorCode::kParse, "metrics.csv: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const std::string where = "metrics.csv at byte offset " + std::to_string(offset);
    const auto f = split_line(line);
    require(f.size() == 12, ErrorCode::kParse, where + ": expected 12 fields");
    const auto seed = static_cast<std::uint64_t>(parse_double(f[2], where));
    const double fraction = parse_double(f[3], where);
    std::vector<int> ids;
    std::istringstream is(f[4]);
    for (int id; is >> id;) ids.push_back(id);
    const int heldout = static_cast<int>(parse_double(f[5], where));
    if (records.empty() || records.back().method != f[0] || records.back().scenario != f[1] ||
        records.back().seed != seed || records.back().fraction != fraction ||
        records.back().generic_subjects != ids || records.back().heldout != heldout ||
        records.back().split_hash != f[11] ||
        std::any_of(records.back().outputs.begin(), records.back().outputs.end(),
                    [&](const OutputMetrics& m) { return m.name == f[6]; })) {
      EvaluationRecord r;
      r.method = f[0];
      r.scenario = f[1];
      r.seed = seed;
      r.fraction = fraction;
      r.generic_subjects = ids;
      r.heldout = heldout;
      r.split_hash = f[11];
      records.push_back(std::move(r));
    }
    OutputMetrics m;
    m.name = f[6];
    m.unit = f[7];
    m.rmse = parse_double(f[8], where);
    m.cc = parse_double(f[9], where);
    m.nrmse = parse_double(f[10], where);
    records.back().outputs.push_back(m);
  }
  return records;
}

std::string loss_curves_csv(const std::vector<LossCurve>& curves, const std::vector<std::string>& muscles) {
  std::string out = "method,scenario,seed,fraction,phase,step,l_data,l_phys,lambda,total";
  for (const auto& m : muscles) out += ",mse_" + m;
  out += ",mse_angle\n";
  for (const LossCurve& c : curves) {
    const std::string prefix = c.method + ',' + c.scenario + ',' + std::to_string(c.seed) + ',' +
                               format_double(c.fraction) + ',' + c.phase + ',';
    for (std::size_t i = 0; i < c.report.curve.size(); ++i) {
      const LossBreakdown& lb = c.report.curve[i];
      out += prefix + std::to_string(i + 1) + ',' + format_double(lb.l_data) + ',' + format_double(lb.l_phys) +
             ',' + format_double(lb.lambda) + ',' + format_double(lb.total);
      for (double v : lb.per_output) out += ',' + format_double(v);
      out += '\n';
    }
  }
  return out;
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::string out = "method,scenario,seed,fraction,phase,minutes\n";
  for (const TimingRow& r : rows) {
    out += r.method + ',' + r.scenario + ',' + std::to_string(r.seed) + ',' + format_double(r.fraction) + ',' +
           r.phase + ',' + format_double(r.minutes) + '\n';
  }
  return out;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string trace_svg(const std::vector<const EvaluationRecord*>& records, std::size_t index) {
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  constexpr double kWidth = 900.0, kHeight = 360.0, kMargin = 50.0;
  std::string title = "output";
  std::string unit;
  const std::vector<double>* truth = nullptr;
  double lo = 0.0, hi = 1.0;
  std::size_t n = 0;
  if (!records.empty() && index < records.front()->outputs.size()) {
    title = records.front()->outputs[index].name;
    unit = records.front()->outputs[index].unit;
    truth = &records.front()->truth[index];
    n = truth->size();
    lo = hi = n ? truth->front() : 0.0;
    for (const EvaluationRecord* r : records) {
      for (double v : r->predicted[index]) lo = std::min(lo, v), hi = std::max(hi, v);
      for (double v : r->truth[index]) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0;
  }
  const std::size_t stride = std::max<std::size_t>(1, n / 1500);
  auto polyline = [&](const std::vector<double>& v, const char* color, const std::string& label) {
    std::string pts;
    for (std::size_t i = 0; i < v.size(); i += stride) {
      const double x = kMargin + (kWidth - 2 * kMargin) * (v.size() > 1 ? double(i) / double(v.size() - 1) : 0.0);
      const double y = kHeight - kMargin - (kHeight - 2 * kMargin) * (v[i] - lo) / (hi - lo);
      if (!pts.empty()) pts += ' ';
      pts += fixed(x) + ',' + fixed(y);
    }
    return "  <polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1\" points=\"" +
           pts + "\"><title>" + xml_escape(label) + "</title></polyline>\n";
  };
  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kWidth, 0) + "\" height=\"" +
         fixed(kHeight, 0) + "\" viewBox=\"0 0 " + fixed(kWidth, 0) + ' ' + fixed(kHeight, 0) + "\">\n";
  svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "  <text x=\"" + fixed(kMargin, 0) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" +
         xml_escape(title) + (unit.empty() ? "" : " (" + xml_escape(unit) + ")") + "</text>\n";
  svg += "  <text x=\"8\" y=\"" + fixed(kMargin, 0) + "\" font-family=\"sans-serif\" font-size=\"10\">" +
         fixed(hi, 3) + "</text>\n";
  svg += "  <text x=\"8\" y=\"" + fixed(kHeight - kMargin, 0) + "\" font-family=\"sans-serif\" font-size=\"10\">" +
         fixed(lo, 3) + "</text>\n";
  if (truth) svg += polyline(*truth, "#000000", "ground truth");
  for (std::size_t k = 0; k < records.size(); ++k) {
    svg += polyline(records[k]->predicted[index], kColors[k % 8], records[k]->method);
  }
  double ly = kMargin;
  auto legend = [&](const char* color, const std::string& label) {
    svg += "  <text x=\"" + fixed(kWidth - kMargin - 120, 0) + "\" y=\"" + fixed(ly, 0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">" + xml_escape(label) +
           "</text>\n";
    ly += 14;
  };
  if (truth) legend("#000000", "ground truth");
  for (std::size_t k = 0; k < records.size(); ++k) legend(kColors[k % 8], records[k]->method);
  svg += "</svg>\n";
  return svg;
}

void emit_reports(const std::vector<EvaluationRecord>& records, const std::vector<LossCurve>& curves,
                  const std::vector<std::string>& muscles, const std::filesystem::path& out_dir) {
  atomic_write_text(out_dir / "metrics.csv", metrics_csv(records));
  atomic_write_text(out_dir / "loss_curves.csv", loss_curves_csv(curves, muscles));
  std::vector<const EvaluationRecord*> first;
  for (const EvaluationRecord& r : records) {
    if (r.truth.empty()) continue;
    if (first.empty() || (r.seed == first.front()->seed && r.fraction == first.front()->fraction &&
                          r.heldout == first.front()->heldout && r.scenario == first.front()->scenario &&
                          r.truth == first.front()->truth)) {
      first.push_back(&r);
    }
  }
  std::vector<std::string> names{"angle"};
  names.insert(names.end(), muscles.begin(), muscles.end());
  for (std::size_t k = 0; k < names.size(); ++k) {
    atomic_write_text(out_dir / ("trace_" + names[k] + ".svg"), trace_svg(first, k));
  }
}

}  // namespace pimtl
