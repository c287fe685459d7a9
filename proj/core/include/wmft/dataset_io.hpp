#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wmft/envs.hpp"
#include "wmft/episode.hpp"

namespace wmft {

inline constexpr int kDatasetSchema = 1;

// Line-delimited JSON. Line 1 is a header record carrying the schema version,
// the environment id and its constants, and the generator provenance. Every
// following line is one episode record:
//
//   {"schema":1,"env":"reach2d","states":[[...],...],"actions":[[...],...],
//    "rewards":[...],"dones":[...],"success":true,"provenance":"..."}
//
// Numbers use the shortest representation that reads back to the same double,
// so write -> read -> write reproduces the file byte for byte.
struct Dataset {
  EnvSpec env;
  std::string provenance;
  std::vector<Episode> episodes;

  std::size_t num_transitions() const;
};

void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

// Throws FormatError naming the offending episode record index (0-based,
// header excluded) and line number.
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace wmft
