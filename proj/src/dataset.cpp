#include "capsrl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "capsrl/errors.hpp"
#include "capsrl/io.hpp"

namespace capsrl {

namespace {

int greedy_action(const std::vector<double>& q_row, bool minimize) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(q_row.size()); ++a) {
    const double v = q_row[static_cast<std::size_t>(a)];
    const double b = q_row[static_cast<std::size_t>(best)];
    if (minimize ? v < b : v > b) {
      best = a;  // strict comparison keeps the lowest index on ties
    }
  }
  return best;
}

}  // namespace

std::vector<std::string> validate_behavior(const BehaviorSpec& spec) {
  std::vector<std::string> out;
  if (spec.weight_reward_greedy < 0 || spec.weight_cost_greedy < 0 || spec.weight_uniform < 0) {
    out.push_back("behavior weights must be >= 0");
  }
  const double sum = spec.weight_reward_greedy + spec.weight_cost_greedy + spec.weight_uniform;
  if (std::abs(sum - 1.0) > 1e-12) {
    out.push_back("behavior weights must sum to 1 within 1e-12 (got " + format_real(sum) + ")");
  }
  if (spec.epsilon_explore < 0.0 || spec.epsilon_explore > 1.0) {
    out.push_back("epsilon_explore must lie in [0, 1]");
  }
  return out;
}

OfflineDataset generate_dataset(const Cmdp& m, const BehaviorSpec& spec, long long n_episodes,
                                RngSeed seed, const ValueTables& vt) {
  require_valid(m);
  if (n_episodes <= 0) {
    throw SchemaError("generate_dataset: n_episodes must be >= 1");
  }
  const auto behavior_errors = validate_behavior(spec);
  if (!behavior_errors.empty()) {
    throw SchemaError("generate_dataset: " + behavior_errors.front());
  }
  if (!vt.cost_solved || !vt.reward_solved) {
    throw InternalError("generate_dataset: value tables must be solved for both objectives");
  }

  OfflineDataset ds;
  ds.env_name = m.name;
  ds.behavior = spec;
  ds.n_episodes = n_episodes;
  ds.horizon = m.horizon;
  ds.seed = seed.seed;
  ds.transitions.reserve(static_cast<std::size_t>(n_episodes) *
                         static_cast<std::size_t>(m.horizon));

  const std::vector<double> weights = {spec.weight_reward_greedy, spec.weight_cost_greedy,
                                       spec.weight_uniform};
  for (long long e = 0; e < n_episodes; ++e) {
    Rng rng(seed, "dataset.episode", static_cast<std::uint64_t>(e));
    const std::size_t component = rng.categorical(weights);  // 0=reward, 1=cost, 2=uniform
    int s = static_cast<int>(rng.categorical(m.mu0));
    for (int t = 0; t < m.horizon; ++t) {
      // Fixed draw order per step: explore coin, (maybe) uniform action,
      // then transition. Keeps files byte-identical for a given seed.
      const double u_explore = rng.next_real();
      int a;
      if (component == 2 || u_explore < spec.epsilon_explore) {
        a = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(m.n_actions)));
      } else if (component == 0) {
        a = greedy_action(vt.qr[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)],
                          /*minimize=*/false);
      } else {
        a = greedy_action(vt.qc[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)],
                          /*minimize=*/true);
      }
      const int s_next = static_cast<int>(rng.categorical(m.transition[s][a]));
      ds.transitions.push_back({t, s, a, m.reward[s][a], m.cost[static_cast<std::size_t>(s_next)],
                                s_next, t == m.horizon - 1});
      s = s_next;
    }
  }
  ds.stats = dataset_stats(ds, m.n_states, m.n_actions);
  return ds;
}

std::string dataset_to_text(const OfflineDataset& ds) {
  JsonWriter header;
  header.begin_object();
  header.key("behavior").begin_object();
  header.key("epsilon_explore").value(ds.behavior.epsilon_explore);
  header.key("weight_cost_greedy").value(ds.behavior.weight_cost_greedy);
  header.key("weight_reward_greedy").value(ds.behavior.weight_reward_greedy);
  header.key("weight_uniform").value(ds.behavior.weight_uniform);
  header.end_object();
  header.key("env_name").value(ds.env_name);
  header.key("horizon").value(ds.horizon);
  header.key("n_episodes").value(ds.n_episodes);
  header.key("seed").value(ds.seed);
  header.end_object();

  std::string out = header.str();
  out += '\n';
  for (const Transition& tr : ds.transitions) {
    out += std::to_string(tr.t);
    out += ',';
    out += std::to_string(tr.s);
    out += ',';
    out += std::to_string(tr.a);
    out += ',';
    out += format_real(tr.r);
    out += ',';
    out += std::to_string(tr.c);
    out += ',';
    out += std::to_string(tr.s_next);
    out += ',';
    out += tr.done ? '1' : '0';
    out += '\n';
  }
  return out;
}

OfflineDataset dataset_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("dataset file: empty (missing JSON header line)");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("dataset file: malformed header: ") + e.what());
  }
  OfflineDataset ds;
  try {
    ds.env_name = j.at("env_name").get<std::string>();
    ds.horizon = j.at("horizon").get<int>();
    ds.n_episodes = j.at("n_episodes").get<long long>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    const auto& b = j.at("behavior");
    ds.behavior.epsilon_explore = b.at("epsilon_explore").get<double>();
    ds.behavior.weight_cost_greedy = b.at("weight_cost_greedy").get<double>();
    ds.behavior.weight_reward_greedy = b.at("weight_reward_greedy").get<double>();
    ds.behavior.weight_uniform = b.at("weight_uniform").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("dataset file: malformed header field: ") + e.what());
  }

  long long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    const std::string where = "dataset line " + std::to_string(line_no);
    if (fields.size() != 7) {
      throw SchemaError(where + ": row arity mismatch (expected 7 fields, got " +
                        std::to_string(fields.size()) + ")");
    }
    Transition tr;
    tr.t = static_cast<int>(parse_int(fields[0], where + " field t"));
    tr.s = static_cast<int>(parse_int(fields[1], where + " field s"));
    tr.a = static_cast<int>(parse_int(fields[2], where + " field a"));
    tr.r = parse_real(fields[3], where + " field r");
    try {
      tr.c = static_cast<int>(parse_int(fields[4], where + " field c"));
    } catch (const SchemaError&) {
      throw SchemaError(where + ": cost field not an integer: '" + fields[4] + "'");
    }
    tr.s_next = static_cast<int>(parse_int(fields[5], where + " field s_next"));
    if (fields[6] == "0") {
      tr.done = false;
    } else if (fields[6] == "1") {
      tr.done = true;
    } else {
      throw SchemaError(where + ": done field must be 0 or 1, got '" + fields[6] + "'");
    }
    ds.transitions.push_back(tr);
  }

  const long long expected =
      ds.n_episodes * static_cast<long long>(ds.horizon);
  if (static_cast<long long>(ds.transitions.size()) != expected) {
    throw SchemaError("dataset file: expected " + std::to_string(expected) + " rows (" +
                      std::to_string(ds.n_episodes) + " episodes x horizon " +
                      std::to_string(ds.horizon) + "), got " +
                      std::to_string(ds.transitions.size()));
  }
  for (std::size_t i = 0; i < ds.transitions.size(); ++i) {
    const Transition& tr = ds.transitions[i];
    const int expected_t = static_cast<int>(i % static_cast<std::size_t>(ds.horizon));
    if (tr.t != expected_t) {
      throw SchemaError("dataset line " + std::to_string(i + 2) +
                        ": episodes must be contiguous with t cycling 0.." +
                        std::to_string(ds.horizon - 1));
    }
    if (tr.done != (tr.t == ds.horizon - 1)) {
      throw SchemaError("dataset line " + std::to_string(i + 2) +
                        ": done flag must mark exactly t = horizon-1");
    }
  }
  return ds;
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_text(ds));
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_text(read_file(path));
}

DatasetStats dataset_stats(const OfflineDataset& ds, int n_states, int n_actions) {
  if (ds.transitions.empty()) {
    throw InternalError("dataset_stats: empty dataset");
  }
  DatasetStats st;
  st.return_min = std::numeric_limits<double>::infinity();
  st.return_max = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  std::set<std::tuple<int, int, int>> covered;
  const std::size_t T = static_cast<std::size_t>(ds.horizon);
  const std::size_t episodes = ds.transitions.size() / T;
  for (std::size_t e = 0; e < episodes; ++e) {
    double ret = 0.0;
    long long cost = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const Transition& tr = ds.transitions[e * T + t];
      ret += tr.r;
      cost += tr.c;
      covered.insert({tr.s, tr.a, tr.t});
    }
    st.return_min = std::min(st.return_min, ret);
    st.return_max = std::max(st.return_max, ret);
    total += ret;
    ++st.cost_histogram[cost];
  }
  st.return_mean = total / static_cast<double>(episodes);
  st.coverage = static_cast<double>(covered.size()) /
                (static_cast<double>(n_states) * static_cast<double>(n_actions) *
                 static_cast<double>(ds.horizon));
  return st;
}

std::uint64_t dataset_hash(const OfflineDataset& ds) { return fnv1a64(dataset_to_text(ds)); }

}  // namespace capsrl
