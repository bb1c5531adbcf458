#include "maskdet/eval/report.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"
#include "maskdet/data/sample.hpp"
#include "maskdet/eval/ap.hpp"
#include "maskdet/eval/difficulty.hpp"
#include "maskdet/eval/iou.hpp"

namespace maskdet::eval {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<Difficulty, 3> kLevels{Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard};

std::vector<ObjectLabel> cars(const std::vector<ObjectLabel>& labels) {
  std::vector<ObjectLabel> out;
  for (const auto& l : labels) {
    if (l.category == Category::Car) out.push_back(l);
  }
  return out;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "     -";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * *v);
  return buf;
}

std::string meters(const std::optional<double>& v) {
  if (!v) return "     -";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.3f", *v);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json stratum_json(const StratumAp& s) { return json{{"ap", optional_json(s.ap)}, {"truths", s.truths}}; }

StratumAp stratum_from(const json& j) { return {optional_from(j.at("ap")), j.at("truths").get<std::size_t>()}; }

}  // namespace

EvalOptions EvalOptions::from(const Config& config) {
  return {config.iou_threshold, config.depth_mae_iou, config.difficulty};
}

EvalReport evaluate(std::span<const std::vector<ObjectLabel>> predictions,
                    std::span<const std::vector<ObjectLabel>> labels, const EvalOptions& options) {
  if (predictions.size() != labels.size()) {
    throw InvalidInput("evaluate: " + std::to_string(predictions.size()) + " prediction sets for " +
                       std::to_string(labels.size()) + " images");
  }
  EvalReport report;
  report.iou_threshold = options.iou_threshold;
  report.images = labels.size();

  std::vector<std::vector<ObjectLabel>> dets(labels.size());
  std::vector<std::vector<ObjectLabel>> gts(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    dets[i] = cars(predictions[i]);
    gts[i] = cars(labels[i]);
    report.detections += dets[i].size();
    report.truths += gts[i].size();
  }

  const IouFn iou3d = [](const ObjectLabel& d, const ObjectLabel& g) { return iou_3d(d.box3d, g.box3d); };
  const IouFn ioubev = [](const ObjectLabel& d, const ObjectLabel& g) { return bev_iou(d.box3d, g.box3d); };

  auto run = [&](auto&& in_stratum, StratumAp& ap3, StratumAp& apb) {
    std::vector<ImageEval> images(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      images[i].detections = dets[i];
      images[i].truths = gts[i];
      for (const auto& g : gts[i]) images[i].in_stratum.push_back(in_stratum(g));
    }
    ap3.truths = apb.truths = stratum_size(images);
    ap3.ap = ap_r40(images, iou3d, options.iou_threshold);
    apb.ap = ap_r40(images, ioubev, options.iou_threshold);
  };

  for (std::size_t k = 0; k < kLevels.size(); ++k) {
    run([&](const ObjectLabel& g) { return meets(g, kLevels[k], options.difficulty); }, report.ap_3d[k],
        report.ap_bev[k]);
  }
  for (int flag = 0; flag < 2; ++flag) {
    run(
        [&](const ObjectLabel& g) {
          return meets(g, Difficulty::Hard, options.difficulty) && occlusion_flag(g) == flag;
        },
        report.occlusion_ap_3d[static_cast<std::size_t>(flag)], report.occlusion_ap_bev[static_cast<std::size_t>(flag)]);
  }
  report.depth = depth_mae(dets, gts, options.depth_mae_iou);
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "images " << images << ", detections " << detections << ", ground truth " << truths << "\n";
  os << "AP|R40 at IoU " << format_real(iou_threshold) << " (%)\n";
  os << "            easy moderate   hard\n";
  os << "  3D      " << percent(ap_3d[0].ap) << "  " << percent(ap_3d[1].ap) << " " << percent(ap_3d[2].ap) << "\n";
  os << "  BEV     " << percent(ap_bev[0].ap) << "  " << percent(ap_bev[1].ap) << " " << percent(ap_bev[2].ap)
     << "\n";
  os << "  truths  " << ap_3d[0].truths << " / " << ap_3d[1].truths << " / " << ap_3d[2].truths << "\n";
  os << "By occlusion (hard set)\n";
  os << "         visible occluded\n";
  os << "  3D      " << percent(occlusion_ap_3d[0].ap) << "  " << percent(occlusion_ap_3d[1].ap) << "\n";
  os << "  BEV     " << percent(occlusion_ap_bev[0].ap) << "  " << percent(occlusion_ap_bev[1].ap) << "\n";
  os << "  truths  " << occlusion_ap_3d[0].truths << " / " << occlusion_ap_3d[1].truths << "\n";
  os << "Depth MAE (m)\n";
  for (int b = 0; b < kNumDepthBins; ++b) {
    os << "  " << depth_bin_name(b) << std::string(8 - depth_bin_name(b).size(), ' ') << meters(depth.mae[static_cast<std::size_t>(b)])
       << "  (" << depth.count[static_cast<std::size_t>(b)] << " pairs)\n";
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  json j;
  j["iou_threshold"] = iou_threshold;
  j["images"] = images;
  j["detections"] = detections;
  j["truths"] = truths;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string name = to_string(kLevels[k]);
    j["ap_3d"][name] = stratum_json(ap_3d[k]);
    j["ap_bev"][name] = stratum_json(ap_bev[k]);
  }
  for (std::size_t f = 0; f < 2; ++f) {
    const std::string name = f == 0 ? "visible" : "occluded";
    j["occlusion_ap_3d"][name] = stratum_json(occlusion_ap_3d[f]);
    j["occlusion_ap_bev"][name] = stratum_json(occlusion_ap_bev[f]);
  }
  for (int b = 0; b < kNumDepthBins; ++b) {
    j["depth_mae"][depth_bin_name(b)] = json{{"mae", optional_json(depth.mae[static_cast<std::size_t>(b)])},
                                             {"pairs", depth.count[static_cast<std::size_t>(b)]}};
  }
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.iou_threshold = j.at("iou_threshold").get<double>();
    r.images = j.at("images").get<std::size_t>();
    r.detections = j.at("detections").get<std::size_t>();
    r.truths = j.at("truths").get<std::size_t>();
    for (std::size_t k = 0; k < 3; ++k) {
      const std::string name = to_string(kLevels[k]);
      r.ap_3d[k] = stratum_from(j.at("ap_3d").at(name));
      r.ap_bev[k] = stratum_from(j.at("ap_bev").at(name));
    }
    for (std::size_t f = 0; f < 2; ++f) {
      const std::string name = f == 0 ? "visible" : "occluded";
      r.occlusion_ap_3d[f] = stratum_from(j.at("occlusion_ap_3d").at(name));
      r.occlusion_ap_bev[f] = stratum_from(j.at("occlusion_ap_bev").at(name));
    }
    for (int b = 0; b < kNumDepthBins; ++b) {
      const auto& e = j.at("depth_mae").at(depth_bin_name(b));
      r.depth.mae[static_cast<std::size_t>(b)] = optional_from(e.at("mae"));
      r.depth.count[static_cast<std::size_t>(b)] = e.at("pairs").get<std::size_t>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("evaluation report: ") + e.what());
  }
}

std::string compare_reports(const EvalReport& a, const std::string& name_a, const EvalReport& b,
                            const std::string& name_b) {
  std::ostringstream os;
  auto row = [&](const std::string& label, const std::optional<double>& x, const std::optional<double>& y,
                 bool is_percent) {
    os << "  " << label << std::string(label.size() < 22 ? 22 - label.size() : 1, ' ')
       << (is_percent ? percent(x) : meters(x)) << "  " << (is_percent ? percent(y) : meters(y));
    if (x && y) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "  %+7.2f", (is_percent ? 100.0 : 1.0) * (*y - *x));
      os << buf;
    }
    os << "\n";
  };
  os << "  metric                     A       B    B-A\n";
  os << "  A = " << name_a << "\n  B = " << name_b << "\n";
  for (std::size_t k = 0; k < 3; ++k) row("AP3D " + to_string(kLevels[k]), a.ap_3d[k].ap, b.ap_3d[k].ap, true);
  for (std::size_t k = 0; k < 3; ++k) row("APBEV " + to_string(kLevels[k]), a.ap_bev[k].ap, b.ap_bev[k].ap, true);
  row("AP3D visible", a.occlusion_ap_3d[0].ap, b.occlusion_ap_3d[0].ap, true);
  row("AP3D occluded", a.occlusion_ap_3d[1].ap, b.occlusion_ap_3d[1].ap, true);
  for (int d = 0; d < kNumDepthBins; ++d) {
    const auto i = static_cast<std::size_t>(d);
    row("depth MAE " + depth_bin_name(d), a.depth.mae[i], b.depth.mae[i], false);
  }
  return os.str();
}

}  // namespace maskdet::eval
