#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "hilomix/error.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/graph/synthetic.hpp"
#include "hilomix/io.hpp"

namespace hilomix::graph {

// Snapshot directory layout:
//   nodes.csv      index,kind,id
//   edges_at.csv   account,contract_node
//   edges_aa.csv   a,b,label
//   features.bin   raw account features, float64 little-endian, row-major
//   features.json  shape and column names for features.bin
//   truth.json     planted truth (synthetic data only)

inline void save_snapshot(const std::filesystem::path& dir, const Hamig& g,
                          const SyntheticTruth* truth = nullptr) {
  g.validate();
  std::filesystem::create_directories(dir);
  std::string nodes = "index,kind,id\n";
  auto check_id = [](const std::string& id) {
    if (id.find_first_of(",\n\r") != std::string::npos) {
      throw ValidationError("identifier '" + id + "' cannot be written to CSV");
    }
  };
  for (std::size_t k = 0; k < g.n_accounts(); ++k) {
    check_id(g.account_ids[k]);
    nodes += std::to_string(k) + ",account," + g.account_ids[k] + "\n";
  }
  for (std::size_t c = 0; c < g.n_contracts(); ++c) {
    check_id(g.contract_ids[c]);
    nodes += std::to_string(g.n_accounts() + c) + ",contract," + g.contract_ids[c] + "\n";
  }
  io::write_text(dir / "nodes.csv", nodes);

  std::string at = "account,contract_node\n";
  for (const auto& e : g.tx_edges) {
    at += std::to_string(e.account) + "," + std::to_string(g.contract_node(e.contract)) + "\n";
  }
  io::write_text(dir / "edges_at.csv", at);

  std::string aa = "a,b,label\n";
  for (const auto& p : g.associations) {
    aa += std::to_string(p.a) + "," + std::to_string(p.b) + "," + std::to_string(p.label) + "\n";
  }
  io::write_text(dir / "edges_aa.csv", aa);

  std::string bin;
  io::append_f64_le(bin, g.features.values());
  io::write_text(dir / "features.bin", bin);
  const nlohmann::json manifest = {{"rows", g.features.rows()},
                                   {"cols", g.features.cols()},
                                   {"dtype", "float64"},
                                   {"byte_order", "little"},
                                   {"layout", "row-major"},
                                   {"columns", g.feature_names}};
  io::write_text(dir / "features.json", manifest.dump(2) + "\n");
  if (truth) io::write_text(dir / "truth.json", truth_to_json(*truth).dump() + "\n");
}

inline Hamig load_snapshot(const std::filesystem::path& dir) {
  Hamig g;
  std::vector<std::string> row;
  {
    io::CsvReader csv(dir / "nodes.csv", {"index", "kind", "id"});
    while (csv.next(row)) {
      if (row.size() != 3) throw ValidationError(csv.where() + ": expected 3 fields");
      const auto idx = io::parse_int(row[0], csv.where(), "index");
      const std::size_t expect = g.n_nodes();
      if (idx < 0 || static_cast<std::size_t>(idx) != expect) {
        throw ValidationError(csv.where() + ": node indices must be consecutive from 0");
      }
      if (row[1] == "account") {
        if (!g.contract_ids.empty()) {
          throw ValidationError(csv.where() + ": account listed after contracts");
        }
        g.account_ids.push_back(row[2]);
      } else if (row[1] == "contract") {
        g.contract_ids.push_back(row[2]);
      } else {
        throw ValidationError(csv.where() + ": unknown node kind '" + row[1] + "'");
      }
    }
  }
  const auto na = static_cast<std::int64_t>(g.n_accounts());
  {
    io::CsvReader csv(dir / "edges_at.csv", {"account", "contract_node"});
    while (csv.next(row)) {
      if (row.size() != 2) throw ValidationError(csv.where() + ": expected 2 fields");
      const auto a = io::parse_int(row[0], csv.where(), "account");
      const auto c = io::parse_int(row[1], csv.where(), "contract_node");
      if (a < 0 || a >= na || c < na || c >= static_cast<std::int64_t>(g.n_nodes())) {
        throw ValidationError(csv.where() + ": transaction edge endpoint out of range");
      }
      g.tx_edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(c - na)});
    }
  }
  {
    io::CsvReader csv(dir / "edges_aa.csv", {"a", "b", "label"});
    while (csv.next(row)) {
      if (row.size() != 3) throw ValidationError(csv.where() + ": expected 3 fields");
      const auto a = io::parse_int(row[0], csv.where(), "a");
      const auto b = io::parse_int(row[1], csv.where(), "b");
      const auto y = io::parse_int(row[2], csv.where(), "label");
      if (a < 0 || b < 0 || a >= na || b >= na) {
        throw ValidationError(csv.where() + ": association endpoint out of range");
      }
      g.associations.push_back(
          {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<int>(y)});
    }
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(dir / "features.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("features.json: ") + e.what());
  }
  const auto rows = manifest.at("rows").get<std::size_t>();
  const auto cols = manifest.at("cols").get<std::size_t>();
  auto values = io::parse_f64_le(io::read_text(dir / "features.bin"));
  if (values.size() != rows * cols) {
    throw ValidationError("features.bin holds " + std::to_string(values.size()) +
                          " values, manifest says " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
  g.features = Matrix(rows, cols, std::move(values));
  g.feature_names = manifest.at("columns").get<std::vector<std::string>>();
  g.validate();
  return g;
}

inline std::optional<SyntheticTruth> load_truth(const std::filesystem::path& dir) {
  const auto p = dir / "truth.json";
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    return truth_from_json(nlohmann::json::parse(io::read_text(p)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("truth.json: ") + e.what());
  }
}

}  // namespace hilomix::graph
