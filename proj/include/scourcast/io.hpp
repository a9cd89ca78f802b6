#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "scourcast/error.hpp"
#include "scourcast/ingest.hpp"
#include "scourcast/models/models.hpp"
#include "scourcast/search.hpp"
#include "scourcast/timeseries.hpp"
#include "scourcast/training.hpp"

namespace scour {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Files

// Writes through a temporary sibling and renames, so readers never observe a
// partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    require(static_cast<bool>(out), Errc::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path.string());
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::ConfigError, path.string() + ": " + e.what());
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Wide frame CSV: timestamp,<channel>,... with empty cells for masked values.

inline std::string format_frame_csv(const TimeSeriesFrame& frame) {
  const auto ids = frame.channel_ids();
  std::string out = "timestamp";
  for (ChannelId id : ids) {
    out += ',';
    out += channel_name(id);
  }
  out += '\n';
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out += format_iso8601(frame.timestamp(i));
    for (ChannelId id : ids) {
      out += ',';
      const auto& ch = frame.channel(id);
      if (!ch.missing[i]) out += format_double(ch.values[i]);
    }
    out += '\n';
  }
  return out;
}

inline TimeSeriesFrame parse_frame_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = detail::trim(text.substr(pos, nl - pos));
    if (!line.empty()) lines.push_back(line);
    pos = nl + 1;
  }
  require(!lines.empty(), Errc::EmptyFile, "frame CSV is empty");
  const auto header = detail::split_csv_line(lines[0]);
  require(header.size() >= 2 && detail::trim(header[0]) == "timestamp", Errc::ConfigError,
          "frame CSV header must start with 'timestamp'");
  std::vector<ChannelId> ids;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto id = parse_channel(detail::trim(header[c]));
    require(id.has_value(), Errc::MissingChannel, "unknown frame column '" + std::string(header[c]) + "'");
    ids.push_back(*id);
  }
  std::vector<Timestamp> ts;
  std::vector<std::vector<double>> values(ids.size());
  std::vector<std::vector<bool>> missing(ids.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = detail::split_csv_line(lines[r]);
    require(fields.size() == ids.size() + 1, Errc::ConfigError, "frame CSV line " + std::to_string(r + 1) +
                                                                   " has the wrong field count");
    auto t = parse_iso8601(detail::trim(fields[0]));
    require(t.has_value(), Errc::ConfigError, "frame CSV line " + std::to_string(r + 1) + ": bad timestamp");
    ts.push_back(*t);
    for (std::size_t c = 0; c < ids.size(); ++c) {
      const auto cell = detail::trim(fields[c + 1]);
      double v = std::numeric_limits<double>::quiet_NaN();
      const bool ok = !cell.empty() && detail::parse_double(cell, v);
      require(cell.empty() || ok, Errc::ConfigError, "frame CSV line " + std::to_string(r + 1) + ": bad value");
      values[c].push_back(ok ? v : 0.0);
      missing[c].push_back(!ok);
    }
  }
  TimeSeriesFrame frame(std::move(ts));
  for (std::size_t c = 0; c < ids.size(); ++c) frame.set_channel(ids[c], std::move(values[c]), std::move(missing[c]));
  return frame;
}

inline TimeSeriesFrame read_frame_csv(const std::string& path) { return parse_frame_csv(read_file(path)); }

// ---------------------------------------------------------------------------
// Reports

inline Json channel_list_json(const std::vector<ChannelId>& ids) {
  Json j = Json::array();
  for (ChannelId id : ids) j.push_back(std::string(channel_name(id)));
  return j;
}

inline std::vector<ChannelId> channel_list_from_json(const Json& j) {
  std::vector<ChannelId> out;
  for (const auto& v : j) {
    auto id = parse_channel(v.get<std::string>());
    require(id.has_value(), Errc::MissingChannel, "unknown channel '" + v.get<std::string>() + "'");
    out.push_back(*id);
  }
  return out;
}

inline Json to_json(const Metrics& m, const std::vector<ChannelId>& targets) {
  Json per_channel = Json::object();
  for (std::size_t k = 0; k < m.channel_mae_ft.size() && k < targets.size(); ++k) {
    Json c = {{"mae_ft", m.channel_mae_ft[k]}};
    if (is_elevation(targets[k])) c["mae_m"] = m.channel_mae_ft[k] * kFeetToMeters;
    per_channel[std::string(channel_name(targets[k]))] = c;
  }
  return {{"samples", m.samples},
          {"metric_channel", std::string(channel_name(m.metric_channel))},
          {"mae_ft", m.mae_ft},
          {"mae_m", m.mae_m},
          {"channels", per_channel},
          {"step_mae_ft", m.step_mae_ft}};
}

// wall_seconds is left out: it is the one quantity a re-run cannot reproduce.
inline Json to_json(const TrainReport& r, const std::vector<ChannelId>& targets) {
  Json epochs = Json::array();
  for (const auto& e : r.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mae_ft", e.val_mae_ft}});
  Json j = {{"config", r.config},
            {"seed", r.seed},
            {"best_epoch", r.best_epoch},
            {"best_val_mae_ft", r.best_val_mae_ft},
            {"epochs", epochs}};
  if (r.val) j["val"] = to_json(*r.val, targets);
  if (r.test) j["test"] = to_json(*r.test, targets);
  if (r.final_test) j["final_test"] = to_json(*r.final_test, targets);
  return j;
}

inline Json to_json(const NormalizationStats& s) {
  Json j = Json::object();
  for (const auto& [id, st] : s.channels) j[std::string(channel_name(id))] = {{"mean", st.mean}, {"std", st.std}};
  return j;
}

inline NormalizationStats normalization_from_json(const Json& j) {
  NormalizationStats s;
  for (const auto& [name, v] : j.items()) {
    auto id = parse_channel(name);
    require(id.has_value(), Errc::MissingChannel, "unknown channel '" + name + "' in normalization stats");
    s.channels[*id] = {v.at("mean").get<double>(), v.at("std").get<double>()};
  }
  return s;
}

inline Json to_json(const PolicyRanking& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"rank", e.rank},
                       {"config", e.config},
                       {"statistic", e.statistic},
                       {"mean_mae_ft", e.mean_mae},
                       {"median_mae_ft", e.median_mae},
                       {"f", e.f},
                       {"f_topk", e.f_topk}});
  return {{"policy", std::string(policy_name(r.policy))}, {"k", r.k}, {"ranking", entries}, {"unobserved", r.unobserved}};
}

// One row per trial record, for box plots of per-config MAE distributions.
inline std::string distributions_csv(const std::vector<TrialRecord>& records, std::string_view search) {
  std::string out = "search,config,trial,val_mae_ft\n";
  for (const auto& r : records) {
    out += std::string(search) + "," + format_config(r.config) + "," + std::to_string(r.trial_index) + "," +
           format_double(r.val_mae) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  std::string config;
  std::string dataset;
  std::size_t fold = 0;
  std::vector<ChannelId> inputs, targets;
  std::size_t w_in = 0, w_out = 0;
  NormalizationStats stats;
  std::uint64_t seed = 0;
};

inline std::string checkpoint_filename(const std::string& config, const std::string& dataset, std::size_t fold) {
  return config + "__" + dataset + "__" + std::to_string(fold) + ".ckpt";
}

inline Json tensor_json(const nn::Tensor& t) { return {{"shape", t.shape()}, {"data", t.storage()}}; }

inline void assign_tensor(nn::Tensor& dst, const Json& j, const std::string& what) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  require(shape == dst.shape(), Errc::ShapeMismatch, what + " has shape " + Json(shape).dump() +
                                                        ", model expects " + dst.shape_string());
  auto data = j.at("data").get<std::vector<double>>();
  require(data.size() == dst.size(), Errc::ShapeMismatch, what + " has the wrong element count");
  dst.storage() = std::move(data);
}

inline Json checkpoint_json(ForecastModel& model, const Checkpoint& meta) {
  Json params = Json::array();
  for (auto* p : model.parameters()) {
    Json t = tensor_json(p->value);
    t["name"] = p->name;
    params.push_back(t);
  }
  Json buffers = Json::array();
  for (auto& [name, t] : model.buffers()) {
    Json b = tensor_json(*t);
    b["name"] = name;
    buffers.push_back(b);
  }
  return {{"schema", "scourcast.checkpoint"},
          {"version", kSchemaVersion},
          {"config", meta.config},
          {"dataset", meta.dataset},
          {"fold", meta.fold},
          {"seed", meta.seed},
          {"w_in", meta.w_in},
          {"w_out", meta.w_out},
          {"inputs", channel_list_json(meta.inputs)},
          {"targets", channel_list_json(meta.targets)},
          {"normalization", to_json(meta.stats)},
          {"parameters", params},
          {"buffers", buffers}};
}

struct LoadedModel {
  Checkpoint meta;
  ForecastModel model;
};

inline LoadedModel load_checkpoint_json(const Json& j) {
  require(j.value("schema", "") == "scourcast.checkpoint", Errc::ConfigError, "not a checkpoint");
  require(j.value("version", 0) == kSchemaVersion, Errc::ConfigError, "unsupported checkpoint version");
  Checkpoint meta;
  meta.config = j.at("config").get<std::string>();
  meta.dataset = j.at("dataset").get<std::string>();
  meta.fold = j.at("fold").get<std::size_t>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.w_in = j.at("w_in").get<std::size_t>();
  meta.w_out = j.at("w_out").get<std::size_t>();
  meta.inputs = channel_list_from_json(j.at("inputs"));
  meta.targets = channel_list_from_json(j.at("targets"));
  meta.stats = normalization_from_json(j.at("normalization"));
  ForecastModel model = build_model(parse_config(meta.config), bind({meta.inputs, meta.targets}, meta.w_in, meta.w_out), 0);
  auto params = model.parameters();
  const auto& jp = j.at("parameters");
  require(jp.size() == params.size(), Errc::ShapeMismatch, "checkpoint parameter count differs from model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(jp[i].at("name").get<std::string>() == params[i]->name, Errc::ShapeMismatch,
            "checkpoint parameter " + jp[i].at("name").get<std::string>() + " where model has " + params[i]->name);
    assign_tensor(params[i]->value, jp[i], params[i]->name);
  }
  auto buffers = model.buffers();
  const auto& jb = j.at("buffers");
  require(jb.size() == buffers.size(), Errc::ShapeMismatch, "checkpoint buffer count differs from model");
  for (std::size_t i = 0; i < buffers.size(); ++i) assign_tensor(*buffers[i].second, jb[i], buffers[i].first);
  return {std::move(meta), std::move(model)};
}

inline void save_checkpoint(const std::filesystem::path& path, ForecastModel& model, const Checkpoint& meta) {
  write_file_atomic(path, checkpoint_json(model, meta).dump() + "\n");
}

inline LoadedModel load_checkpoint(const std::filesystem::path& path) { return load_checkpoint_json(read_json(path)); }

}  // namespace scour
