#include <cinttypes>
#include <cstdio>
#include <string>

#include "igc/planner.hpp"
#include "json.hpp"

namespace igc {

using nlohmann::json;

namespace {

BlockKind kind_from_string(const std::string& s) {
  if (s == "xception") return BlockKind::xception;
  if (s == "igcv1") return BlockKind::igcv1;
  if (s == "igcv2") return BlockKind::igcv2;
  if (s == "igcv2_star") return BlockKind::igcv2_star;
  if (s == "igcv3") return BlockKind::igcv3;
  throw usage_error("unknown block kind: " + s);
}

std::string kind_to_string(BlockKind k) {
  switch (k) {
    case BlockKind::xception: return "xception";
    case BlockKind::igcv1: return "igcv1";
    case BlockKind::igcv2: return "igcv2";
    case BlockKind::igcv2_star: return "igcv2_star";
    case BlockKind::igcv3: return "igcv3";
  }
  throw usage_error("unknown block kind");
}

}  // namespace

std::string recipe_to_json(const NetworkRecipe& recipe, bool pretty) {
  json doc;
  doc["version"] = 1;
  doc["input_channels"] = recipe.input_channels;
  if (recipe.stem)
    doc["stem"] = {{"width", recipe.stem->width},
                   {"spatial_taps", recipe.stem->spatial_taps},
                   {"stride", recipe.stem->stride}};
  json stages = json::array();
  for (const auto& s : recipe.stages) {
    json js = {{"kind", kind_to_string(s.kind)},
               {"width", s.width},
               {"blocks", s.blocks},
               {"stride", s.stride}};
    if (s.channels_in > 0) js["channels_in"] = s.channels_in;
    if (s.k > 0) js["k"] = s.k;
    if (s.kind == BlockKind::igcv2) js["L"] = s.depth_L;
    if (s.kind == BlockKind::igcv3) {
      js["t"] = s.t;
      js["g1"] = s.g1;
      js["g2"] = s.g2;
    }
    stages.push_back(std::move(js));
  }
  doc["stages"] = std::move(stages);
  if (recipe.head) doc["head"] = {{"classes", recipe.head->classes}};
  doc["count_affine"] = recipe.count_affine;
  return pretty ? doc.dump(2) : doc.dump();
}

NetworkRecipe recipe_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw usage_error(std::string("recipe document is not valid JSON: ") + e.what());
  }
  try {
    NetworkRecipe r;
    r.input_channels = doc.value("input_channels", 3);
    if (doc.contains("stem")) {
      StemSpec stem;
      stem.width = doc["stem"].at("width").get<int>();
      stem.spatial_taps = doc["stem"].value("spatial_taps", 9);
      stem.stride = doc["stem"].value("stride", 1);
      r.stem = stem;
    }
    for (const auto& js : doc.at("stages")) {
      StageSpec s;
      s.kind = kind_from_string(js.at("kind").get<std::string>());
      s.width = js.at("width").get<int>();
      s.channels_in = js.value("channels_in", 0);
      s.blocks = js.value("blocks", 1);
      s.k = js.value("k", 0);
      s.depth_L = js.value("L", 3);
      s.stride = js.value("stride", 1);
      s.t = js.value("t", 6.0);
      s.g1 = js.value("g1", 2);
      s.g2 = js.value("g2", 2);
      r.stages.push_back(s);
    }
    if (doc.contains("head")) {
      HeadSpec head;
      head.classes = doc["head"].at("classes").get<int>();
      r.head = head;
    }
    r.count_affine = doc.value("count_affine", true);
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw usage_error(std::string("recipe document missing required field: ") + e.what());
  }
}

std::string design_points_to_json(const std::vector<DesignPoint>& points, bool pretty) {
  json arr = json::array();
  for (const auto& p : points) {
    arr.push_back({{"channels", p.channels},
                   {"spatial_taps", p.spatial_taps},
                   {"depth", p.depth},
                   {"branch_widths", p.branch_widths},
                   {"params", p.params},
                   {"flops_per_position", p.flops_per_position},
                   {"width", p.width},
                   {"balance_score", p.balance_score},
                   {"density", p.density_verdict}});
  }
  return pretty ? arr.dump(2) : arr.dump();
}

std::string design_points_to_table(const std::vector<DesignPoint>& points) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %10s %10s %9s %10s\n", "K", "params", "bound-gap",
                "balance", "density");
  out += line;
  for (const auto& p : points) {
    std::string k = "(";
    for (std::size_t i = 0; i < p.branch_widths.size(); ++i)
      k += (i ? "," : "") + std::to_string(p.branch_widths[i]);
    k += ")";
    double bound = param_lower_bound(p.channels, p.spatial_taps, p.depth);
    std::snprintf(line, sizeof line, "%-20s %10" PRIu64 " %10.1f %9.3f %10s\n", k.c_str(),
                  p.params, double(p.params) - bound, p.balance_score,
                  p.density_verdict.c_str());
    out += line;
  }
  return out;
}

std::string budget_to_json(const NetworkBudget& budget, bool pretty) {
  json doc;
  doc["total_params"] = budget.total_params;
  doc["total_flops"] = budget.total_flops;
  json items = json::array();
  for (const auto& it : budget.items)
    items.push_back({{"name", it.name}, {"params", it.params}, {"flops", it.flops}});
  doc["items"] = std::move(items);
  return pretty ? doc.dump(2) : doc.dump();
}

std::string budget_to_table(const NetworkBudget& budget) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %14s %16s\n", "item", "params", "flops");
  out += line;
  for (const auto& it : budget.items) {
    std::snprintf(line, sizeof line, "%-24s %14" PRIu64 " %16" PRIu64 "\n", it.name.c_str(),
                  it.params, it.flops);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-24s %14" PRIu64 " %16" PRIu64 "\n", "total",
                budget.total_params, budget.total_flops);
  out += line;
  return out;
}

}  // namespace igc
