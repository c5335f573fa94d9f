#include "capsrl/cmdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "capsrl/errors.hpp"
#include "capsrl/io.hpp"

namespace capsrl {

namespace {

constexpr double kSumTol = 1e-12;

std::string idx_sa(int s, int a) {
  return "(s=" + std::to_string(s) + ",a=" + std::to_string(a) + ")";
}

}  // namespace

std::vector<Violation> validate(const Cmdp& m) {
  std::vector<Violation> out;
  auto add = [&out](std::string field, std::string index, double observed, std::string message) {
    out.push_back({std::move(field), std::move(index), observed, std::move(message)});
  };

  if (m.n_states < 1) add("n_states", "", m.n_states, "n_states must be >= 1");
  if (m.n_actions < 1) add("n_actions", "", m.n_actions, "n_actions must be >= 1");
  if (m.horizon < 1) add("horizon", "", m.horizon, "horizon must be >= 1");
  if (m.c_max < 0) add("c_max", "", m.c_max, "c_max must be >= 0");
  if (!out.empty()) {
    return out;  // shape checks below assume sane dimensions
  }

  const auto S = static_cast<std::size_t>(m.n_states);
  const auto A = static_cast<std::size_t>(m.n_actions);
  if (m.transition.size() != S || m.reward.size() != S || m.cost.size() != S ||
      m.mu0.size() != S) {
    add("shape", "", 0, "transition/reward/cost/mu0 must all have n_states entries");
    return out;
  }
  for (std::size_t s = 0; s < S; ++s) {
    if (m.transition[s].size() != A || m.reward[s].size() != A) {
      add("shape", "(s=" + std::to_string(s) + ")", 0,
          "transition/reward rows must have n_actions entries");
      return out;
    }
    for (std::size_t a = 0; a < A; ++a) {
      if (m.transition[s][a].size() != S) {
        add("shape", idx_sa(static_cast<int>(s), static_cast<int>(a)), 0,
            "transition row must have n_states entries");
        return out;
      }
    }
  }

  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      double sum = 0.0;
      for (int sn = 0; sn < m.n_states; ++sn) {
        const double p = m.transition[s][a][sn];
        if (p < 0.0) {
          add("transition", idx_sa(s, a) + "[s'=" + std::to_string(sn) + "]", p,
              "transition probability must be >= 0");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > kSumTol) {
        add("transition_row_sum", idx_sa(s, a), sum, "row must sum to 1 within 1e-12");
      }
    }
  }
  for (int s = 0; s < m.n_states; ++s) {
    if (m.cost[s] < 0 || m.cost[s] > m.c_max) {
      add("cost", "(s=" + std::to_string(s) + ")", m.cost[s],
          "cost must lie in [0, c_max]");
    }
  }
  double mu_sum = 0.0;
  for (int s = 0; s < m.n_states; ++s) {
    if (m.mu0[s] < 0.0) {
      add("mu0", "(s=" + std::to_string(s) + ")", m.mu0[s], "mu0 entries must be >= 0");
    }
    mu_sum += m.mu0[s];
  }
  if (std::abs(mu_sum - 1.0) > kSumTol) {
    add("mu0_sum", "", mu_sum, "mu0 must sum to 1 within 1e-12");
  }
  return out;
}

void require_valid(const Cmdp& m) {
  const auto violations = validate(m);
  if (violations.empty()) {
    return;
  }
  std::ostringstream msg;
  msg << "invalid CMDP '" << m.name << "':";
  for (const auto& v : violations) {
    msg << " [" << v.field << v.index << " observed=" << v.observed << ": " << v.message << "]";
  }
  throw InternalError(msg.str());
}

Trajectory sample_episode(const Cmdp& m, const CostAwarePolicy& policy, RngSeed seed) {
  require_valid(m);
  Rng rng(seed, "cmdp.episode", 0);
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(m.horizon));
  int s = static_cast<int>(rng.categorical(m.mu0));
  long long c_before = 0;  // accumulated cost of states visited strictly before t
  for (int t = 0; t < m.horizon; ++t) {
    const int a = policy(s, t, c_before);
    if (a < 0 || a >= m.n_actions) {
      throw InternalError("policy returned out-of-range action " + std::to_string(a) +
                          " at (s=" + std::to_string(s) + ",t=" + std::to_string(t) + ")");
    }
    c_before += m.cost[s];
    const int s_next = static_cast<int>(rng.categorical(m.transition[s][a]));
    const double r = m.reward[s][a];
    const int c = m.cost[s_next];  // cost incurred entering the successor
    traj.steps.push_back({t, s, a, r, c});
    traj.total_reward += r;
    traj.total_cost += c;
    s = s_next;
  }
  traj.final_state = s;
  return traj;
}

Cmdp make_chain3() {
  Cmdp m;
  m.name = "chain3";
  m.n_states = 3;  // 0 = start, 1 = risky landing (cost 1), 2 = safe landing
  m.n_actions = 2;
  m.horizon = 1;
  m.c_max = 1;
  m.cost = {0, 1, 0};
  m.mu0 = {1.0, 0.0, 0.0};
  m.reward.assign(3, std::vector<double>(2, 0.0));
  m.reward[0][kChain3Safe] = 0.2;
  m.reward[0][kChain3Risky] = 1.0;
  m.transition.assign(3, std::vector<std::vector<double>>(2, std::vector<double>(3, 0.0)));
  m.transition[0][kChain3Safe][2] = 1.0;
  m.transition[0][kChain3Risky][1] = 1.0;
  for (int a = 0; a < 2; ++a) {
    m.transition[1][a][1] = 1.0;
    m.transition[2][a][2] = 1.0;
  }
  return m;
}

Cmdp make_hazard_gridworld(int width, int height, const std::vector<int>& hazards, int goal,
                           double slip_prob, int horizon) {
  if (width < 1 || height < 1 || width * height > 400) {
    throw SchemaError("gridworld: width*height must be in [1, 400]");
  }
  const int n = width * height;
  if (goal < 0 || goal >= n) {
    throw SchemaError("gridworld: goal cell out of range");
  }
  std::vector<bool> hazard(static_cast<std::size_t>(n), false);
  for (const int h : hazards) {
    if (h < 0 || h >= n) {
      throw SchemaError("gridworld: hazard cell out of range");
    }
    if (h == goal) {
      throw SchemaError("gridworld: goal must not be a hazard cell");
    }
    hazard[static_cast<std::size_t>(h)] = true;
  }
  if (slip_prob < 0.0 || slip_prob >= 1.0) {
    throw SchemaError("gridworld: slip_prob must lie in [0, 1)");
  }
  if (horizon < 1) {
    throw SchemaError("gridworld: horizon must be >= 1");
  }

  Cmdp m;
  m.name = "gridworld-" + std::to_string(width) + "x" + std::to_string(height);
  m.n_states = n;
  m.n_actions = 5;  // up, right, down, left, stay
  m.horizon = horizon;
  m.c_max = 1;
  m.cost.assign(static_cast<std::size_t>(n), 0);
  for (int s = 0; s < n; ++s) {
    if (hazard[static_cast<std::size_t>(s)]) {
      m.cost[static_cast<std::size_t>(s)] = 1;
    }
  }
  m.reward.assign(static_cast<std::size_t>(n), std::vector<double>(5, -0.01));
  for (int a = 0; a < 5; ++a) {
    m.reward[static_cast<std::size_t>(goal)][static_cast<std::size_t>(a)] = 1.0;
  }
  m.transition.assign(static_cast<std::size_t>(n),
                      std::vector<std::vector<double>>(5, std::vector<double>(n, 0.0)));

  // Direction deltas indexed by action 0..3; action 4 is stay.
  const int drow[4] = {-1, 0, 1, 0};
  const int dcol[4] = {0, 1, 0, -1};
  auto move = [&](int cell, int dir) {
    const int row = cell / width;
    const int col = cell % width;
    const int nr = row + drow[dir];
    const int nc = col + dcol[dir];
    if (nr < 0 || nr >= height || nc < 0 || nc >= width) {
      return cell;  // off-grid moves bounce
    }
    return nr * width + nc;
  };

  for (int s = 0; s < n; ++s) {
    if (s == goal) {
      for (int a = 0; a < 5; ++a) {
        m.transition[s][a][goal] = 1.0;  // absorbing
      }
      continue;
    }
    for (int a = 0; a < 5; ++a) {
      if (a == 4) {
        m.transition[s][a][s] = 1.0;  // stay never slips
        continue;
      }
      m.transition[s][a][move(s, a)] += 1.0 - slip_prob;
      m.transition[s][a][move(s, (a + 1) % 4)] += slip_prob / 2.0;  // +90 degrees
      m.transition[s][a][move(s, (a + 3) % 4)] += slip_prob / 2.0;  // -90 degrees
    }
  }

  int start = -1;
  for (int s = 0; s < n; ++s) {
    if (s != goal && !hazard[static_cast<std::size_t>(s)]) {
      start = s;
      break;
    }
  }
  if (start < 0) {
    throw SchemaError("gridworld: no non-hazard, non-goal cell available as start");
  }
  m.mu0.assign(static_cast<std::size_t>(n), 0.0);
  m.mu0[static_cast<std::size_t>(start)] = 1.0;
  return m;
}

Cmdp make_random_cmdp(int n_states, int n_actions, int horizon, int branching, int cost_max,
                      RngSeed seed) {
  if (n_states < 1 || n_actions < 1 || horizon < 1 || cost_max < 0) {
    throw SchemaError("random cmdp: dimensions must be positive and cost_max >= 0");
  }
  if (branching < 1 || branching > n_states) {
    throw SchemaError("random cmdp: branching must lie in [1, n_states]");
  }
  Cmdp m;
  m.name = "random-s" + std::to_string(n_states) + "a" + std::to_string(n_actions) + "t" +
           std::to_string(horizon) + "b" + std::to_string(branching) + "c" +
           std::to_string(cost_max) + "-" + std::to_string(seed.seed) + "." +
           std::to_string(seed.stream);
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.horizon = horizon;
  m.c_max = cost_max;
  m.transition.assign(static_cast<std::size_t>(n_states),
                      std::vector<std::vector<double>>(static_cast<std::size_t>(n_actions),
                                                       std::vector<double>(n_states, 0.0)));
  m.reward.assign(static_cast<std::size_t>(n_states),
                  std::vector<double>(static_cast<std::size_t>(n_actions), 0.0));
  m.cost.assign(static_cast<std::size_t>(n_states), 0);
  m.mu0.assign(static_cast<std::size_t>(n_states), 0.0);
  m.mu0[0] = 1.0;

  Rng rng(seed, "cmdp.random", 0);
  std::vector<int> pool(static_cast<std::size_t>(n_states));
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      // Choose `branching` distinct successors via partial Fisher-Yates.
      for (int i = 0; i < n_states; ++i) {
        pool[static_cast<std::size_t>(i)] = i;
      }
      for (int i = 0; i < branching; ++i) {
        const int j = i + static_cast<int>(rng.next_below(
                              static_cast<std::uint64_t>(n_states - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      }
      // Flat-Dirichlet weights over the chosen support.
      double total = 0.0;
      std::vector<double> w(static_cast<std::size_t>(branching));
      for (int i = 0; i < branching; ++i) {
        w[static_cast<std::size_t>(i)] = rng.next_exponential();
        total += w[static_cast<std::size_t>(i)];
      }
      for (int i = 0; i < branching; ++i) {
        m.transition[s][a][pool[static_cast<std::size_t>(i)]] =
            w[static_cast<std::size_t>(i)] / total;
      }
      m.reward[s][a] = rng.next_real();
    }
  }
  for (int s = 0; s < n_states; ++s) {
    m.cost[static_cast<std::size_t>(s)] =
        cost_max == 0 ? 0 : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cost_max + 1)));
  }
  return m;
}

std::vector<int> support(const Cmdp& m, int s, int a) {
  if (s < 0 || s >= m.n_states || a < 0 || a >= m.n_actions) {
    throw InternalError("support: index out of range");
  }
  std::vector<int> out;
  for (int sn = 0; sn < m.n_states; ++sn) {
    if (m.transition[s][a][sn] > 0.0) {
      out.push_back(sn);
    }
  }
  return out;
}

std::string cmdp_to_json(const Cmdp& m) {
  JsonWriter w;
  w.begin_object();
  w.key("name").value(m.name);
  w.key("n_states").value(m.n_states);
  w.key("n_actions").value(m.n_actions);
  w.key("horizon").value(m.horizon);
  w.key("c_max").value(m.c_max);
  w.key("transition").begin_array();
  for (const auto& row_s : m.transition) {
    w.begin_array();
    for (const auto& row_a : row_s) {
      w.real_array(row_a);
    }
    w.end_array();
  }
  w.end_array();
  w.key("reward").begin_array();
  for (const auto& row_s : m.reward) {
    w.real_array(row_s);
  }
  w.end_array();
  w.key("cost").int_array(m.cost);
  w.key("mu0").real_array(m.mu0);
  w.end_object();
  return w.str() + "\n";
}

Cmdp cmdp_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("cmdp file: not valid JSON: ") + e.what());
  }
  const char* required[] = {"name",  "n_states", "n_actions", "horizon", "c_max",
                            "transition", "reward",   "cost",    "mu0"};
  for (const char* k : required) {
    if (!j.contains(k)) {
      throw SchemaError(std::string("cmdp file: missing key '") + k + "'");
    }
  }
  Cmdp m;
  try {
    m.name = j.at("name").get<std::string>();
    m.n_states = j.at("n_states").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    m.horizon = j.at("horizon").get<int>();
    m.c_max = j.at("c_max").get<int>();
    m.transition = j.at("transition").get<std::vector<std::vector<std::vector<double>>>>();
    m.reward = j.at("reward").get<std::vector<std::vector<double>>>();
    m.cost = j.at("cost").get<std::vector<int>>();
    m.mu0 = j.at("mu0").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("cmdp file: malformed field: ") + e.what());
  }
  const auto violations = validate(m);
  if (!violations.empty()) {
    throw SchemaError("cmdp file: invalid instance: " + violations.front().field +
                      violations.front().index + ": " + violations.front().message);
  }
  return m;
}

void save_cmdp(const Cmdp& m, const std::filesystem::path& path) {
  write_file_atomic(path, cmdp_to_json(m));
}

Cmdp load_cmdp(const std::filesystem::path& path) { return cmdp_from_json(read_file(path)); }

}  // namespace capsrl
