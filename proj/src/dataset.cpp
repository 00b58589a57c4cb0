#include "macflow/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace macflow {

using nlohmann::json;

std::size_t OfflineDataset::transition_count() const {
  std::size_t n = 0;
  for (const JointTrajectory& t : trajectories) n += t.steps.size();
  return n;
}

namespace {

std::string where(std::size_t traj, std::size_t step) {
  return "trajectory " + std::to_string(traj) + " step " + std::to_string(step);
}

}  // namespace

void validate_dataset(const OfflineDataset& dataset) {
  const JointSpace& space = dataset.env.space;
  const std::size_t n_agents = space.agent_count();
  for (std::size_t k = 0; k < dataset.trajectories.size(); ++k) {
    const auto& steps = dataset.trajectories[k].steps;
    if (steps.empty()) throw std::invalid_argument("trajectory " + std::to_string(k) + " is empty");
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const JointStep& s = steps[t];
      if (s.obs.size() != n_agents || s.act.size() != n_agents || s.rew.size() != n_agents) {
        throw std::invalid_argument(where(k, t) + ": expected " + std::to_string(n_agents) +
                                    " agents");
      }
      for (std::size_t i = 0; i < n_agents; ++i) {
        const AgentSpace& a = space.agent(i);
        if (s.obs[i].size() != a.obs_dim) {
          throw std::invalid_argument(where(k, t) + ": observation of agent " + std::to_string(i) +
                                      " has dimension " + std::to_string(s.obs[i].size()));
        }
        const std::size_t want = a.kind == ActionKind::discrete ? 1 : a.action_dim;
        if (s.act[i].size() != want) {
          throw std::invalid_argument(where(k, t) + ": action of agent " + std::to_string(i) +
                                      " has dimension " + std::to_string(s.act[i].size()));
        }
      }
    }
  }
}

void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path) {
  if (dataset.trajectories.empty()) {
    throw std::invalid_argument("save_dataset: dataset has no trajectories");
  }
  validate_dataset(dataset);

  json header = {{"format", "macflow-dataset"},
                 {"version", kDatasetVersion},
                 {"env", dataset.env.tag},
                 {"seed", dataset.meta.seed},
                 {"zeta", dataset.meta.zeta ? json(*dataset.meta.zeta) : json(nullptr)},
                 {"policy", dataset.meta.policy},
                 {"shared_reward", dataset.env.shared_reward},
                 {"space", to_json(dataset.env.space)},
                 {"env_params", dataset.env.params}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  out << header.dump() << '\n';
  for (const JointTrajectory& traj : dataset.trajectories) {
    json obs = json::array(), act = json::array(), rew = json::array(), term = json::array();
    for (const JointStep& s : traj.steps) {
      obs.push_back(s.obs);
      act.push_back(s.act);
      rew.push_back(s.rew);
      term.push_back(s.terminal);
    }
    out << json{{"obs", obs}, {"act", act}, {"rew", rew}, {"term", term}}.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());

  OfflineDataset ds;
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(std::string("malformed record (") + e.what() + ")");
    }
    try {
      if (line_no == 1) {
        if (j.value("format", "") != "macflow-dataset") fail("missing dataset header");
        const int version = j.at("version").get<int>();
        if (version != kDatasetVersion) fail("unsupported dataset version " + std::to_string(version));
        ds.env.tag = j.at("env").get<std::string>();
        ds.env.space = joint_space_from_json(j.at("space"));
        ds.env.shared_reward = j.at("shared_reward").get<bool>();
        ds.env.params = j.at("env_params");
        ds.meta.seed = j.at("seed").get<std::uint64_t>();
        if (!j.at("zeta").is_null()) ds.meta.zeta = j.at("zeta").get<double>();
        ds.meta.policy = j.at("policy").get<std::string>();
        continue;
      }
      const auto obs = j.at("obs").get<std::vector<std::vector<std::vector<double>>>>();
      const auto act = j.at("act").get<std::vector<std::vector<std::vector<double>>>>();
      const auto rew = j.at("rew").get<std::vector<std::vector<double>>>();
      const auto term = j.at("term").get<std::vector<bool>>();
      const std::size_t T = obs.size();
      if (act.size() != T || rew.size() != T || term.size() != T) {
        fail("obs/act/rew/term lengths differ");
      }
      JointTrajectory traj;
      for (std::size_t t = 0; t < T; ++t) traj.steps.push_back({obs[t], act[t], rew[t], term[t]});
      ds.trajectories.push_back(std::move(traj));
      OfflineDataset probe{ds.env, ds.meta, {ds.trajectories.back()}};
      validate_dataset(probe);
    } catch (const json::exception& e) {
      fail(std::string("bad record (") + e.what() + ")");
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (line_no == 0) fail("empty file");
  if (ds.trajectories.empty()) fail("no episodes after header");
  return ds;
}

TransitionBuffer::TransitionBuffer(const OfflineDataset& dataset) : space_(dataset.env.space) {
  validate_dataset(dataset);
  const std::size_t n = dataset.transition_count();
  if (n == 0) throw std::invalid_argument("TransitionBuffer: dataset has no transitions");
  const std::size_t od = space_.joint_obs_dim(), ad = space_.joint_action_dim();
  const std::size_t agents = space_.agent_count();
  all_.obs = Tensor(n, od);
  all_.act = Tensor(n, ad);
  all_.rew = Tensor(n, agents);
  all_.next_obs = Tensor(n, od);
  all_.terminal = Tensor(n, 1);

  const auto put_obs = [&](Tensor& dst, std::size_t row, const JointStep& s) {
    for (std::size_t i = 0; i < agents; ++i) {
      const std::size_t off = space_.obs_offset(i);
      for (std::size_t d = 0; d < s.obs[i].size(); ++d) dst(row, off + d) = s.obs[i][d];
    }
  };

  std::size_t row = 0;
  for (const JointTrajectory& traj : dataset.trajectories) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t, ++row) {
      const JointStep& s = traj.steps[t];
      put_obs(all_.obs, row, s);
      const bool last = t + 1 == traj.steps.size();
      put_obs(all_.next_obs, row, last ? s : traj.steps[t + 1]);
      const std::vector<double> a = encode_joint_action(space_, s.act);
      std::copy(a.begin(), a.end(), all_.act.row_span(row).begin());
      for (std::size_t i = 0; i < agents; ++i) all_.rew(row, i) = s.rew[i];
      // A truncated episode end without a terminal flag still has no successor.
      all_.terminal(row, 0) = (s.terminal || last) ? 1.0 : 0.0;
    }
  }
}

TransitionBatch TransitionBuffer::gather(std::span<const std::size_t> rows) const {
  return {select_rows(all_.obs, rows), select_rows(all_.act, rows), select_rows(all_.rew, rows),
          select_rows(all_.next_obs, rows), select_rows(all_.terminal, rows)};
}

TransitionBatch TransitionBuffer::sample(std::size_t batch_size, Rng& rng) const {
  std::vector<std::size_t> rows(batch_size);
  for (std::size_t& r : rows) r = rng.index(size());
  return gather(rows);
}

}  // namespace macflow
