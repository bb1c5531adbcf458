#include "maskdet/train/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "maskdet/core/keyvalue.hpp"
#include "maskdet/model/checkpoint.hpp"
#include "maskdet/model/inference.hpp"
#include "maskdet/train/optimizer.hpp"
#include "maskdet/train/step.hpp"

namespace maskdet::train {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kLastCheckpoint = "last.ckpt";
constexpr const char* kBestCheckpoint = "best.ckpt";
constexpr const char* kPartialMarker = "training.partial";

std::seed_seq make_seq(std::uint64_t seed, std::uint32_t tag, std::uint64_t a, std::uint64_t b) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                       static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                       static_cast<std::uint32_t>(b >> 32)};
}

void save_checkpoint(const std::filesystem::path& path, model::Network<float>& net, const AdamW<float>& opt,
                     int epoch, int best_epoch, double best_metric) {
  model::Checkpoint ckpt;
  model::export_network(net, ckpt);
  opt.export_state(net, ckpt);
  ckpt.scalars["epoch"] = epoch;
  ckpt.scalars["best_epoch"] = best_epoch;
  ckpt.scalars["best_metric"] = best_metric;
  ckpt.save(path);
}

void write_divergence_dump(const std::filesystem::path& dir, int epoch, int step,
                           const std::vector<const Sample*>& batch, const LossBundle& loss) {
  json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["sample_ids"] = json::array();
  for (const auto* s : batch) j["sample_ids"].push_back(s->id);
  j["l_occ"] = format_real(loss.l_occ);
  j["l_com"] = format_real(loss.l_com);
  for (int t = 0; t < kNumBaseTerms; ++t) j[std::string("l_") + base_term_name(t)] = format_real(loss.base[t]);
  j["total"] = format_real(loss.total);
  write_text_file(dir / "nonfinite_batch.json", j.dump(2) + "\n");
}

}  // namespace

std::string EpochRecord::to_json_line() const {
  json j;
  j["epoch"] = epoch;
  j["steps"] = steps;
  j["loss_total"] = loss.total;
  j["loss_occ"] = loss.l_occ;
  j["loss_com"] = loss.l_com;
  j["loss_base"] = loss.l_base;
  for (int t = 0; t < kNumBaseTerms; ++t) j[std::string("loss_") + base_term_name(t)] = loss.base[t];
  j["mask_ratio_mean"] = mask_ratio_mean;
  j["mask_zero_rate"] = mask_zero_rate;
  j["occlusion_accuracy"] = occlusion_accuracy;
  j["completion_error"] = completion_error;
  j["identity_error"] = identity_error;
  if (val) j["val"] = json::parse(val->to_json());
  return j.dump();
}

EpochRecord EpochRecord::from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.steps = j.at("steps").get<int>();
    r.loss.total = j.at("loss_total").get<double>();
    r.loss.l_occ = j.at("loss_occ").get<double>();
    r.loss.l_com = j.at("loss_com").get<double>();
    r.loss.l_base = j.at("loss_base").get<double>();
    for (int t = 0; t < kNumBaseTerms; ++t) r.loss.base[t] = j.at(std::string("loss_") + base_term_name(t)).get<double>();
    r.mask_ratio_mean = j.at("mask_ratio_mean").get<double>();
    r.mask_zero_rate = j.at("mask_zero_rate").get<double>();
    r.occlusion_accuracy = j.at("occlusion_accuracy").get<double>();
    r.completion_error = j.at("completion_error").get<double>();
    r.identity_error = j.at("identity_error").get<double>();
    if (j.contains("val")) r.val = eval::EvalReport::from_json(j.at("val").dump());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics record: ") + e.what());
  }
}

double selection_metric(const eval::EvalReport& report) { return report.ap_3d[1].ap.value_or(-1.0); }

nn::Rng sample_rng(std::uint64_t seed, int epoch, std::size_t sample_index) {
  auto seq = make_seq(seed, 0x6d61736bu, static_cast<std::uint64_t>(epoch), sample_index);
  return nn::Rng(seq);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t count) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  auto seq = make_seq(seed, 0x73687566u, static_cast<std::uint64_t>(epoch), 0);
  nn::Rng rng(seq);
  // Fisher-Yates with explicit draws so the order is identical across standard libraries.
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::vector<ObjectLabel>> predict_all(model::Network<float>& net, std::span<const Sample> samples) {
  std::vector<std::vector<ObjectLabel>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model::predict(net, s));
  return out;
}

eval::EvalReport evaluate_network(model::Network<float>& net, std::span<const Sample> samples) {
  const auto preds = predict_all(net, samples);
  std::vector<std::vector<ObjectLabel>> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.labels);
  return eval::evaluate(preds, labels, eval::EvalOptions::from(net.config()));
}

TrainResult train(const Config& config, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw InvalidInput("train: empty training set");
  TrainResult result;
  result.network.emplace(config, config.seed);
  auto& net = *result.network;
  AdamW<float> opt(config.learning_rate, config.weight_decay);

  const bool persist = !options.output_dir.empty();
  const auto metrics_path = options.output_dir / kMetricsFile;
  const auto last_path = options.output_dir / kLastCheckpoint;
  const auto best_path = options.output_dir / kBestCheckpoint;
  if (persist) {
    std::filesystem::create_directories(options.output_dir);
    write_text_file(options.output_dir / kPartialMarker, "training in progress\n");
  }

  if (options.resume && persist && std::filesystem::exists(last_path)) {
    const auto ckpt = model::Checkpoint::load(last_path);
    const Config saved = ckpt.config();
    // Shape differences are reported first, then any other changed field.
    model::import_network(net, ckpt);
    if (!(saved == config)) {
      std::string diff;
      for (const auto& d : config_differences(saved, config)) diff += "\n  " + d;
      throw ConfigError("config", "resume: configuration differs from " + last_path.string() + ":" + diff);
    }
    opt.import_state(net, ckpt);
    result.start_epoch = static_cast<int>(ckpt.scalar("epoch")) + 1;
    result.best_epoch = static_cast<int>(ckpt.scalar("best_epoch"));
    result.best_metric = ckpt.scalar("best_metric");
    // Keep only the log lines the checkpoint has seen.
    std::string kept;
    if (std::filesystem::exists(metrics_path)) {
      std::istringstream in(read_text_file(metrics_path));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto rec = EpochRecord::from_json_line(line);
        if (rec.epoch < result.start_epoch) {
          kept += line + "\n";
          result.history.push_back(std::move(rec));
        }
      }
    }
    write_text_file(metrics_path, kept);
    spdlog::info("resuming at epoch {}", result.start_epoch);
  } else if (persist) {
    write_text_file(metrics_path, "");
  }

  const int last_epoch = options.stop_after_epoch > 0 ? std::min(options.stop_after_epoch, config.epochs)
                                                       : config.epochs;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  for (int epoch = result.start_epoch; epoch <= last_epoch; ++epoch) {
    const auto order = epoch_order(config.seed, epoch, train_set.size());
    EpochRecord rec;
    rec.epoch = epoch;
    MaskStats mask;
    OcclusionStats occ;
    std::array<double, kNumBaseTerms> base_sum{};
    double occ_sum = 0.0, com_sum = 0.0, comp_err = 0.0, ident_err = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<const Sample*> batch;
      std::vector<nn::Rng> rngs;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&train_set[order[i]]);
        rngs.push_back(sample_rng(config.seed, epoch, order[i]));
      }
      net.zero_grad();
      const StepResult step = train_step<float>(net, batch, rngs);
      if (!step.loss.finite()) {
        std::string ids;
        for (const auto* s : batch) ids += (ids.empty() ? "" : ",") + s->id;
        if (persist) write_divergence_dump(options.output_dir, epoch, steps + 1, batch, step.loss);
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                               std::to_string(steps + 1) + " (batch ids " + ids + ")");
      }
      clip_grad_norm(net, config.grad_clip_norm);
      opt.step(net);
      ++steps;
      occ_sum += step.loss.l_occ;
      com_sum += step.loss.l_com;
      for (int t = 0; t < kNumBaseTerms; ++t) base_sum[t] += step.loss.base[t];
      comp_err += step.completion_error;
      ident_err += step.identity_error;
      mask.merge(step.mask);
      occ.merge(step.occlusion);
    }
    for (auto& v : base_sum) v /= steps;
    rec.steps = steps;
    rec.loss = LossBundle::combine(occ_sum / steps, com_sum / steps, base_sum, config);
    rec.mask_ratio_mean = mask.mean_ratio();
    rec.mask_zero_rate = mask.zero_rate();
    rec.occlusion_accuracy = occ.accuracy();
    rec.completion_error = comp_err / steps;
    rec.identity_error = ident_err / steps;

    const bool validate = !val_set.empty() && (epoch % config.val_every == 0 || epoch == config.epochs);
    if (validate) {
      rec.val = evaluate_network(net, val_set);
      const double metric = selection_metric(*rec.val);
      if (result.best_epoch == 0 || metric > result.best_metric) {
        result.best_metric = metric;
        result.best_epoch = epoch;
        if (persist) save_checkpoint(best_path, net, opt, epoch, result.best_epoch, result.best_metric);
      }
    } else if (val_set.empty() && persist) {
      result.best_epoch = epoch;
      save_checkpoint(best_path, net, opt, epoch, result.best_epoch, result.best_metric);
    }
    if (persist) {
      std::ofstream log(metrics_path, std::ios::app);
      log << rec.to_json_line() << "\n";
      save_checkpoint(last_path, net, opt, epoch, result.best_epoch, result.best_metric);
    }
    spdlog::info("epoch {} loss {:.4f} (occ {:.4f} com {:.4f} base {:.4f}) mask r {:.3f}", epoch, rec.loss.total,
                 rec.loss.l_occ, rec.loss.l_com, rec.loss.l_base, rec.mask_ratio_mean);
    if (options.on_epoch) options.on_epoch(rec);
    result.history.push_back(std::move(rec));
  }
  if (persist && last_epoch == config.epochs) std::filesystem::remove(options.output_dir / kPartialMarker);
  return result;
}

}  // namespace maskdet::train
