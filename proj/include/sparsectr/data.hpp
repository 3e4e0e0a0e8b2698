#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsectr/common.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Listwise samples and their JSONL serialization.
//
// One sample is one user impression: the user's categorical profile, a
// left-padded behavior history sorted by time (time 0 marks padding), and a
// slate of one or more candidates each carrying its own 0/1 label. Candidates
// also carry the probability the synthetic generator used to draw the label
// (`planted`), which supports oracle comparisons; it is 0 when unknown.
//
// On disk a dataset is JSON Lines: one sample object per line.
// ---------------------------------------------------------------------------

struct BehaviorEvent {
  std::int64_t item = 0;
  std::int64_t category = 0;
  std::uint64_t time = 0;  // Unix seconds; 0 = padding slot
};

struct Candidate {
  std::int64_t item = 0;
  std::int64_t category = 0;
  std::int64_t hour = 0;     // 0..23, local hour of the impression
  std::int64_t weekend = 0;  // 0/1
  double numeric = 0.0;      // free-form numeric feature (e.g. price scale)
  int label = 0;             // 0/1 click label
  double planted = 0.0;      // generator's Bernoulli parameter, 0 if unknown
};

struct ListwiseSample {
  std::vector<std::int64_t> user;  // one id per user profile field
  std::vector<BehaviorEvent> behaviors;
  std::vector<Candidate> candidates;
};

namespace detail {

inline nlohmann::json sample_to_json(const ListwiseSample& s) {
  nlohmann::json j;
  j["user"] = s.user;
  auto& bs = j["behaviors"] = nlohmann::json::array();
  for (const auto& b : s.behaviors)
    bs.push_back({{"item", b.item}, {"category", b.category}, {"time", b.time}});
  auto& cs = j["candidates"] = nlohmann::json::array();
  for (const auto& c : s.candidates)
    cs.push_back({{"item", c.item},
                  {"category", c.category},
                  {"hour", c.hour},
                  {"weekend", c.weekend},
                  {"numeric", c.numeric},
                  {"label", c.label},
                  {"planted", c.planted}});
  return j;
}

inline ListwiseSample sample_from_json(const nlohmann::json& j) {
  ListwiseSample s;
  s.user = j.at("user").get<std::vector<std::int64_t>>();
  for (const auto& b : j.at("behaviors"))
    s.behaviors.push_back({b.at("item").get<std::int64_t>(),
                           b.at("category").get<std::int64_t>(),
                           b.at("time").get<std::uint64_t>()});
  for (const auto& c : j.at("candidates")) {
    Candidate cand;
    cand.item = c.at("item").get<std::int64_t>();
    cand.category = c.at("category").get<std::int64_t>();
    cand.hour = c.at("hour").get<std::int64_t>();
    cand.weekend = c.at("weekend").get<std::int64_t>();
    cand.numeric = c.at("numeric").get<double>();
    cand.label = c.at("label").get<int>();
    cand.planted = c.value("planted", 0.0);
    s.candidates.push_back(cand);
  }
  if (s.candidates.empty()) throw DataError("sample has no candidates");
  return s;
}

}  // namespace detail

inline void write_jsonl(const std::string& path, const std::vector<ListwiseSample>& samples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto& s : samples) out << detail::sample_to_json(s).dump() << '\n';
  if (!out) throw DataError("write to " + path + " failed");
}

inline std::vector<ListwiseSample> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<ListwiseSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      samples.push_back(detail::sample_from_json(nlohmann::json::parse(line)));
    } catch (const DataError& e) {
      throw DataError(path + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return samples;
}

}  // namespace sparsectr
