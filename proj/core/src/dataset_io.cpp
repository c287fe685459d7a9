#include "wmft/dataset_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "wmft/errors.hpp"

namespace wmft {
namespace {

using Json = nlohmann::ordered_json;

Json env_to_json(const EnvSpec& e) {
  Json j;
  j["id"] = to_string(e.id);
  j["reward_mode"] = to_string(e.reward_mode);
  j["episode_length"] = e.episode_length;
  j["action_repeat"] = e.action_repeat;
  j["step_scale"] = e.step_scale;
  j["goal_threshold"] = e.goal_threshold;
  j["contact_radius"] = e.contact_radius;
  j["friction"] = e.friction;
  j["arena"] = e.arena;
  j["init_extent"] = e.init_extent;
  j["goal_offset_x"] = e.goal_offset_x;
  j["goal_offset_y"] = e.goal_offset_y;
  return j;
}

EnvSpec env_from_json(const Json& j) {
  EnvSpec e = make_env_spec(parse_env_id(j.at("id").get<std::string>()),
                            parse_reward_mode(j.at("reward_mode").get<std::string>()));
  e.episode_length = j.at("episode_length").get<int>();
  e.action_repeat = j.at("action_repeat").get<int>();
  e.step_scale = j.at("step_scale").get<double>();
  e.goal_threshold = j.at("goal_threshold").get<double>();
  e.contact_radius = j.at("contact_radius").get<double>();
  e.friction = j.at("friction").get<double>();
  e.arena = j.at("arena").get<double>();
  e.init_extent = j.at("init_extent").get<double>();
  e.goal_offset_x = j.at("goal_offset_x").get<double>();
  e.goal_offset_y = j.at("goal_offset_y").get<double>();
  e.validate();
  return e;
}

Json vec_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vec_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError("expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json episode_to_json(const Episode& ep, const std::string& env_id) {
  Json j;
  j["schema"] = kDatasetSchema;
  j["env"] = env_id;
  Json states = Json::array();
  for (const auto& s : ep.states) states.push_back(vec_to_json(s));
  Json actions = Json::array();
  for (const auto& a : ep.actions) actions.push_back(vec_to_json(a));
  Json dones = Json::array();
  for (bool d : ep.dones) dones.push_back(d);
  j["states"] = std::move(states);
  j["actions"] = std::move(actions);
  j["rewards"] = ep.rewards;
  j["dones"] = std::move(dones);
  j["success"] = ep.success;
  j["provenance"] = ep.provenance;
  return j;
}

Episode episode_from_json(const Json& j, const EnvSpec& env) {
  if (!j.is_object()) throw FormatError("record is not an object");
  if (j.at("schema").get<int>() != kDatasetSchema) throw FormatError("unsupported schema version");
  if (j.at("env").get<std::string>() != to_string(env.id)) {
    throw FormatError("record environment differs from the file header");
  }
  Episode ep;
  for (const auto& s : j.at("states")) ep.states.push_back(vec_from_json(s));
  for (const auto& a : j.at("actions")) ep.actions.push_back(vec_from_json(a));
  for (const auto& r : j.at("rewards")) {
    if (!r.is_number()) throw FormatError("reward is not a number");
    ep.rewards.push_back(r.get<double>());
  }
  for (const auto& d : j.at("dones")) {
    if (!d.is_boolean()) throw FormatError("done flag is not a boolean");
    ep.dones.push_back(d.get<bool>());
  }
  ep.success = j.at("success").get<bool>();
  ep.provenance = j.at("provenance").get<std::string>();
  validate_episode(ep);
  if (ep.states.front().size() != env.state_dim() || ep.actions.front().size() != env.action_dim()) {
    throw FormatError("record dimensions do not match the environment");
  }
  return ep;
}

}  // namespace

std::size_t Dataset::num_transitions() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.length();
  return n;
}

void write_dataset(std::ostream& out, const Dataset& data) {
  Json header;
  header["format"] = "wmft-episodes";
  header["schema"] = kDatasetSchema;
  header["env"] = env_to_json(data.env);
  header["episodes"] = data.episodes.size();
  header["provenance"] = data.provenance;
  out << header.dump() << '\n';
  const std::string env_id = to_string(data.env.id);
  for (const auto& ep : data.episodes) out << episode_to_json(ep, env_id).dump() << '\n';
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open dataset for writing: " + path.string());
  write_dataset(f, data);
  if (!f) throw Error("failed writing dataset: " + path.string());
}

Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset is empty (missing header record)");
  std::size_t expected = 0;
  try {
    const Json header = Json::parse(line);
    if (header.at("format").get<std::string>() != "wmft-episodes") {
      throw FormatError("not an episode dataset");
    }
    if (header.at("schema").get<int>() != kDatasetSchema) {
      throw FormatError("unsupported schema version");
    }
    data.env = env_from_json(header.at("env"));
    data.provenance = header.at("provenance").get<std::string>();
    expected = header.at("episodes").get<std::size_t>();
  } catch (const FormatError& e) {
    throw FormatError(std::string("dataset header (line 1): ") + e.what());
  } catch (const std::exception& e) {
    throw FormatError(std::string("dataset header (line 1): ") + e.what());
  }

  std::size_t index = 0;
  while (std::getline(in, line)) {
    const std::size_t line_no = index + 2;
    try {
      data.episodes.push_back(episode_from_json(Json::parse(line), data.env));
    } catch (const std::exception& e) {
      throw FormatError("episode record " + std::to_string(index) + " (line " +
                        std::to_string(line_no) + "): " + e.what());
    }
    ++index;
  }
  if (data.episodes.size() != expected) {
    throw FormatError("dataset header announces " + std::to_string(expected) +
                      " episode records, found " + std::to_string(data.episodes.size()));
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open dataset: " + path.string());
  return read_dataset(f);
}

}  // namespace wmft
