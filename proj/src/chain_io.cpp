#include <string>

#include "igc/structure.hpp"
#include "json.hpp"

namespace igc {

using nlohmann::json;

std::string chain_to_json(const FactorChain& chain, bool pretty) {
  json doc;
  doc["version"] = 1;
  doc["channels"] = chain.channels_in();
  json factors = json::array();
  for (const auto& f : chain.factors) {
    json jf = {{"k_in", f.branch_width_in},
               {"k_out", f.branch_width_out},
               {"s", f.spatial_taps},
               {"g", f.branches}};
    if (f.branches * f.branch_width_out != f.channels_out) jf["c_out"] = f.channels_out;
    factors.push_back(std::move(jf));
  }
  doc["factors"] = std::move(factors);
  json inter = json::array();
  for (const auto& p : chain.interleaves) inter.push_back(p.map);
  doc["interleaves"] = std::move(inter);
  if (chain.trailing && !chain.trailing->is_identity()) doc["trailing"] = chain.trailing->map;
  return pretty ? doc.dump(2) : doc.dump();
}

FactorChain chain_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw usage_error(std::string("chain document is not valid JSON: ") + e.what());
  }
  try {
    FactorChain chain;
    int channels = doc.at("channels").get<int>();
    for (const auto& jf : doc.at("factors")) {
      GroupConvSpec f;
      f.channels_in = channels;
      f.branch_width_in = jf.at("k_in").get<int>();
      f.branch_width_out = jf.at("k_out").get<int>();
      f.spatial_taps = jf.at("s").get<int>();
      f.branches = jf.at("g").get<int>();
      f.channels_out =
          jf.contains("c_out") ? jf.at("c_out").get<int>() : f.branches * f.branch_width_out;
      channels = f.channels_out;
      chain.factors.push_back(std::move(f));
    }
    for (const auto& jp : doc.at("interleaves")) {
      PermutationSpec p;
      p.map = jp.get<std::vector<int>>();
      chain.interleaves.push_back(std::move(p));
    }
    if (doc.contains("trailing")) {
      PermutationSpec p;
      p.map = doc.at("trailing").get<std::vector<int>>();
      chain.trailing = std::move(p);
    }
    chain.validate();
    return chain;
  } catch (const json::exception& e) {
    throw usage_error(std::string("chain document missing required field: ") + e.what());
  }
}

}  // namespace igc
