#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparsectr/common.hpp"
#include "sparsectr/data.hpp"
#include "sparsectr/model.hpp"
#include "sparsectr/rng.hpp"
#include "sparsectr/temporal.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Synthetic listwise CTR data with planted structure.
//
// Each user browses in sessions: bursts of events seconds apart, separated by
// long lognormal gaps, optionally snapped forward to the user's preferred
// hour of day and preferred half of the week. Within a session the user
// follows one interest (a category); interests drift between sessions. After
// every completed session past the first, the user receives an impression: a
// slate of candidates, half drawn from the current interest, labeled by
//
//   p = sigmoid(a * match + b * hour_affinity + c * week_affinity + bias0)
//
// where match says the candidate's category equals the current interest,
// hour_affinity in [0, 1] rises as the impression hour approaches the user's
// preferred hour, and week_affinity says the impression falls on the user's
// preferred week half. Labels are Bernoulli(p) with an independent flip of
// probability label_noise. The drawn p is stored on each candidate
// (`planted`), so the Bayes-optimal ranking is available as an oracle.
//
// Items map to categories by item % num_categories. The candidate `numeric`
// feature is a pure distractor with no effect on labels. Every user derives
// an independent RNG stream from (seed, user index), so any subset of users
// regenerates identically in any order.
// ---------------------------------------------------------------------------

struct GeneratorSpec {
  std::uint64_t seed = 1;
  std::size_t num_users = 1000;
  std::size_t max_behaviors = 64;  // |B|: histories are clipped/padded to this
  std::size_t num_items = 1000;
  std::size_t num_categories = 20;
  std::size_t num_user_values = 1000;
  std::size_t num_user_fields = 2;
  std::size_t candidates_per_impression = 4;
  std::size_t max_impressions_per_user = 6;
  std::size_t min_sessions = 3, max_sessions = 8;
  std::size_t min_session_events = 3, max_session_events = 10;
  double inter_session_gap_hours = 30.0;    // lognormal scale between sessions
  double intra_session_gap_seconds = 90.0;  // exponential mean within a session
  double interest_drift = 0.3;              // per-session chance of a new interest
  double focus = 0.8;                       // in-session share of interest items
  double hour_pref_strength = 0.7;          // chance a session snaps to the hour
  double weekend_pref_strength = 0.6;       // chance a session snaps to the week half
  std::uint64_t exposure_gap_seconds = 3600;
  double match_weight = 3.5;   // a
  double hour_weight = 0.35;   // b
  double week_weight = 0.35;   // c
  double bias0 = -1.75;
  double label_noise = 0.05;

  void validate() const {
    if (num_users == 0 || max_behaviors == 0) throw DataError("generator: empty geometry");
    if (num_items < num_categories)
      throw DataError("generator: need at least one item per category");
    if (num_user_fields == 0 || num_user_values == 0)
      throw DataError("generator: user fields/vocabulary must be positive");
    if (candidates_per_impression == 0) throw DataError("generator: empty slates");
    if (min_sessions < 2 || max_sessions < min_sessions)
      throw DataError("generator: need at least two sessions per user");
    if (min_session_events == 0 || max_session_events < min_session_events)
      throw DataError("generator: bad session event range");
    if (label_noise < 0.0 || label_noise >= 0.5)
      throw DataError("generator: label noise must be in [0, 0.5)");
  }
};

inline nlohmann::json spec_to_json(const GeneratorSpec& s) {
  return nlohmann::json{{"seed", s.seed},
                        {"num_users", s.num_users},
                        {"max_behaviors", s.max_behaviors},
                        {"num_items", s.num_items},
                        {"num_categories", s.num_categories},
                        {"num_user_values", s.num_user_values},
                        {"num_user_fields", s.num_user_fields},
                        {"candidates_per_impression", s.candidates_per_impression},
                        {"max_impressions_per_user", s.max_impressions_per_user},
                        {"min_sessions", s.min_sessions},
                        {"max_sessions", s.max_sessions},
                        {"min_session_events", s.min_session_events},
                        {"max_session_events", s.max_session_events},
                        {"inter_session_gap_hours", s.inter_session_gap_hours},
                        {"intra_session_gap_seconds", s.intra_session_gap_seconds},
                        {"interest_drift", s.interest_drift},
                        {"focus", s.focus},
                        {"hour_pref_strength", s.hour_pref_strength},
                        {"weekend_pref_strength", s.weekend_pref_strength},
                        {"exposure_gap_seconds", s.exposure_gap_seconds},
                        {"match_weight", s.match_weight},
                        {"hour_weight", s.hour_weight},
                        {"week_weight", s.week_weight},
                        {"bias0", s.bias0},
                        {"label_noise", s.label_noise}};
}

inline GeneratorSpec spec_from_json(const nlohmann::json& j) {
  GeneratorSpec d;
  GeneratorSpec s;
  s.seed = j.value("seed", d.seed);
  s.num_users = j.value("num_users", d.num_users);
  s.max_behaviors = j.value("max_behaviors", d.max_behaviors);
  s.num_items = j.value("num_items", d.num_items);
  s.num_categories = j.value("num_categories", d.num_categories);
  s.num_user_values = j.value("num_user_values", d.num_user_values);
  s.num_user_fields = j.value("num_user_fields", d.num_user_fields);
  s.candidates_per_impression =
      j.value("candidates_per_impression", d.candidates_per_impression);
  s.max_impressions_per_user = j.value("max_impressions_per_user", d.max_impressions_per_user);
  s.min_sessions = j.value("min_sessions", d.min_sessions);
  s.max_sessions = j.value("max_sessions", d.max_sessions);
  s.min_session_events = j.value("min_session_events", d.min_session_events);
  s.max_session_events = j.value("max_session_events", d.max_session_events);
  s.inter_session_gap_hours = j.value("inter_session_gap_hours", d.inter_session_gap_hours);
  s.intra_session_gap_seconds =
      j.value("intra_session_gap_seconds", d.intra_session_gap_seconds);
  s.interest_drift = j.value("interest_drift", d.interest_drift);
  s.focus = j.value("focus", d.focus);
  s.hour_pref_strength = j.value("hour_pref_strength", d.hour_pref_strength);
  s.weekend_pref_strength = j.value("weekend_pref_strength", d.weekend_pref_strength);
  s.exposure_gap_seconds = j.value("exposure_gap_seconds", d.exposure_gap_seconds);
  s.match_weight = j.value("match_weight", d.match_weight);
  s.hour_weight = j.value("hour_weight", d.hour_weight);
  s.week_weight = j.value("week_weight", d.week_weight);
  s.bias0 = j.value("bias0", d.bias0);
  s.label_noise = j.value("label_noise", d.label_noise);
  s.validate();
  return s;
}

// Model configuration whose vocabularies and geometry match a generated
// dataset (network size fields keep their defaults).
inline ModelConfig model_config_for(const GeneratorSpec& s) {
  ModelConfig c;
  c.max_behaviors = s.max_behaviors;
  c.num_items = s.num_items;
  c.num_categories = s.num_categories;
  c.num_user_values = s.num_user_values;
  c.num_user_fields = s.num_user_fields;
  c.candidate_gap_seconds = s.exposure_gap_seconds;
  return c;
}

namespace detail {

inline double circular_hour_distance(double a, double b) {
  const double d = std::fabs(a - b);
  return std::min(d, 24.0 - d);
}

// Push t forward to the next moment whose hour-of-day equals `hour`.
inline std::uint64_t advance_to_hour(std::uint64_t t, std::uint64_t hour) {
  const std::uint64_t day_sec = t % 86400, want = hour * 3600;
  if (day_sec <= want) return t + (want - day_sec);
  return t + (86400 - day_sec) + want;
}

// Push t forward until is_weekend(t) matches `want` (at most a week).
inline std::uint64_t advance_to_week_half(std::uint64_t t, bool want) {
  while (is_weekend(t) != want) t += 86400;
  return t;
}

}  // namespace detail

// All impressions for one user; deterministic given (spec.seed, user_index)
// alone.
inline std::vector<ListwiseSample> generate_user_samples(const GeneratorSpec& spec,
                                                         std::size_t user_index) {
  spec.validate();
  Rng rng(Rng::derive(spec.seed, user_index));

  std::vector<std::int64_t> user_fields;
  user_fields.push_back(static_cast<std::int64_t>(user_index % spec.num_user_values));
  for (std::size_t f = 1; f < spec.num_user_fields; ++f)
    user_fields.push_back(rng.uniform_int(0, static_cast<std::int64_t>(spec.num_user_values) - 1));

  const std::int64_t preferred_hour = rng.uniform_int(0, 23);
  const bool prefers_weekend = rng.bernoulli(0.5);
  std::int64_t interest = rng.uniform_int(0, static_cast<std::int64_t>(spec.num_categories) - 1);
  const std::int64_t items_per_cat =
      static_cast<std::int64_t>(spec.num_items / spec.num_categories);

  const auto item_of = [&](std::int64_t category) {
    const std::int64_t slot = rng.uniform_int(0, items_per_cat - 1);
    return category + slot * static_cast<std::int64_t>(spec.num_categories);
  };

  // Start within the first eight weeks, never at the padding sentinel 0.
  std::uint64_t t = 86400 + static_cast<std::uint64_t>(rng.uniform_int(0, 55)) * 86400 +
                    static_cast<std::uint64_t>(rng.uniform_int(0, 86399));

  std::vector<BehaviorEvent> history;
  std::vector<ListwiseSample> samples;
  const std::size_t sessions = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(spec.min_sessions), static_cast<std::int64_t>(spec.max_sessions)));

  for (std::size_t sess = 0; sess < sessions; ++sess) {
    if (sess > 0) {
      const double gap_hours = rng.lognormal(std::log(spec.inter_session_gap_hours), 0.6);
      t += static_cast<std::uint64_t>(std::max(1.0, gap_hours * 3600.0));
      if (rng.bernoulli(spec.weekend_pref_strength))
        t = detail::advance_to_week_half(t, prefers_weekend);
      if (rng.bernoulli(spec.hour_pref_strength))
        t = detail::advance_to_hour(t, static_cast<std::uint64_t>(preferred_hour));
      if (rng.bernoulli(spec.interest_drift))
        interest = rng.uniform_int(0, static_cast<std::int64_t>(spec.num_categories) - 1);
    }

    const std::size_t events = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.min_session_events),
                        static_cast<std::int64_t>(spec.max_session_events)));
    for (std::size_t e = 0; e < events; ++e) {
      std::int64_t category = interest;
      if (!rng.bernoulli(spec.focus))
        category = rng.uniform_int(0, static_cast<std::int64_t>(spec.num_categories) - 1);
      history.push_back({item_of(category), category, t});
      t += 1 + static_cast<std::uint64_t>(rng.exponential(spec.intra_session_gap_seconds));
    }

    // Impression after every completed session beyond the first.
    if (sess == 0 || samples.size() >= spec.max_impressions_per_user) continue;
    ListwiseSample s;
    s.user = user_fields;
    const std::size_t keep = std::min(history.size(), spec.max_behaviors);
    s.behaviors.assign(spec.max_behaviors - keep, BehaviorEvent{});
    s.behaviors.insert(s.behaviors.end(), history.end() - static_cast<std::ptrdiff_t>(keep),
                       history.end());

    const std::uint64_t exposure = history.back().time + spec.exposure_gap_seconds;
    const std::int64_t hour = static_cast<std::int64_t>((exposure / 3600) % 24);
    const bool weekend = is_weekend(exposure);
    const double hour_aff = std::max(
        0.0, 1.0 - detail::circular_hour_distance(static_cast<double>(hour),
                                                  static_cast<double>(preferred_hour)) /
                       12.0);
    const double week_aff = weekend == prefers_weekend ? 1.0 : 0.0;

    for (std::size_t k = 0; k < spec.candidates_per_impression; ++k) {
      Candidate cand;
      const bool match = rng.bernoulli(0.5);
      std::int64_t category = interest;
      if (!match && spec.num_categories > 1) {
        do {
          category = rng.uniform_int(0, static_cast<std::int64_t>(spec.num_categories) - 1);
        } while (category == interest);
      }
      cand.item = item_of(category);
      cand.category = category;
      cand.hour = hour;
      cand.weekend = weekend ? 1 : 0;
      cand.numeric = rng.uniform(-1.0, 1.0);
      const double logit = spec.match_weight * (category == interest ? 1.0 : 0.0) +
                           spec.hour_weight * hour_aff + spec.week_weight * week_aff +
                           spec.bias0;
      cand.planted = 1.0 / (1.0 + std::exp(-logit));
      int label = rng.bernoulli(cand.planted) ? 1 : 0;
      if (spec.label_noise > 0.0 && rng.bernoulli(spec.label_noise)) label = 1 - label;
      cand.label = label;
      s.candidates.push_back(cand);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// Users with index % 10 == 0 form the held-out split, so train and test never
// share a user.
inline bool is_test_user(std::size_t user_index) { return user_index % 10 == 0; }

inline void generate_dataset(const GeneratorSpec& spec, std::vector<ListwiseSample>& train,
                             std::vector<ListwiseSample>& test) {
  train.clear();
  test.clear();
  for (std::size_t u = 0; u < spec.num_users; ++u) {
    auto samples = generate_user_samples(spec, u);
    auto& dst = is_test_user(u) ? test : train;
    for (auto& s : samples) dst.push_back(std::move(s));
  }
}

}  // namespace sparsectr
