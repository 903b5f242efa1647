#include "taxirl/zone_graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <string_view>

namespace taxirl {

ActionMask::ActionMask(ZoneId zone, int degree, int max_degree)
    : zone_(zone), pass_count_(degree + 1) {
  if (degree < 0 || degree > max_degree) {
    throw NetworkError("action mask: degree out of range");
  }
  entries_.assign(static_cast<std::size_t>(max_degree) + 1, MaskEntry::block);
  std::fill_n(entries_.begin(), pass_count_, MaskEntry::pass);
}

ZoneNetwork ZoneNetwork::from_edges(
    std::span<const std::pair<ExternalZoneId, ExternalZoneId>> edges,
    std::span<const ExternalZoneId> extra_zones) {
  std::set<ExternalZoneId> ids(extra_zones.begin(), extra_zones.end());
  std::set<std::pair<ExternalZoneId, ExternalZoneId>> normalized;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0) {
      throw NetworkError("negative zone ID in edge (" + std::to_string(a) + "," +
                         std::to_string(b) + ")");
    }
    if (a == b) {
      throw NetworkError("self-loop on zone " + std::to_string(a));
    }
    if (!normalized.emplace(std::min(a, b), std::max(a, b)).second) {
      throw NetworkError("duplicate edge (" + std::to_string(a) + "," +
                         std::to_string(b) + ")");
    }
    ids.insert(a);
    ids.insert(b);
  }
  for (ExternalZoneId id : ids) {
    if (id < 0) throw NetworkError("negative zone ID " + std::to_string(id));
  }

  ZoneNetwork net;
  net.external_ids_.assign(ids.begin(), ids.end());
  net.adjacency_.resize(net.external_ids_.size());
  for (auto [a, b] : normalized) {
    ZoneId da = net.dense_id(a);
    ZoneId db = net.dense_id(b);
    net.adjacency_[static_cast<std::size_t>(da)].push_back(db);
    net.adjacency_[static_cast<std::size_t>(db)].push_back(da);
  }
  for (auto& adj : net.adjacency_) {
    std::sort(adj.begin(), adj.end());
    net.max_degree_ = std::max(net.max_degree_, static_cast<int>(adj.size()));
  }
  net.edge_count_ = normalized.size();
  net.masks_.reserve(net.adjacency_.size());
  for (std::size_t z = 0; z < net.adjacency_.size(); ++z) {
    net.masks_.emplace_back(static_cast<ZoneId>(z),
                            static_cast<int>(net.adjacency_[z].size()),
                            net.max_degree_);
  }
  return net;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::optional<ExternalZoneId> parse_id(std::string_view s) {
  s = trim(s);
  ExternalZoneId v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    return std::nullopt;
  }
  return v;
}

}  // namespace

ZoneNetwork ZoneNetwork::parse(std::istream& in) {
  std::vector<std::pair<ExternalZoneId, ExternalZoneId>> edges;
  std::vector<ExternalZoneId> isolated;
  std::map<std::pair<ExternalZoneId, ExternalZoneId>, int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (auto hash = body.find('#'); hash != std::string_view::npos) {
      body = body.substr(0, hash);
    }
    body = trim(body);
    if (body.empty()) continue;

    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto comma = body.find(',');
    if (comma == std::string_view::npos) {
      auto id = parse_id(body);
      if (!id || *id < 0) throw NetworkError(where + "malformed zone ID");
      isolated.push_back(*id);
      continue;
    }
    auto a = parse_id(body.substr(0, comma));
    auto b = parse_id(body.substr(comma + 1));
    if (!a || !b) throw NetworkError(where + "malformed edge record");
    if (*a < 0 || *b < 0) throw NetworkError(where + "negative zone ID");
    if (*a == *b) throw NetworkError(where + "self-loop on zone " + std::to_string(*a));
    auto key = std::make_pair(std::min(*a, *b), std::max(*a, *b));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw NetworkError(where + "duplicate of edge on line " +
                         std::to_string(it->second));
    }
    edges.emplace_back(*a, *b);
  }
  return from_edges(edges, isolated);
}

ZoneNetwork ZoneNetwork::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open edge list " + path.string());
  try {
    return parse(in);
  } catch (const NetworkError& e) {
    throw NetworkError(path.string() + ": " + e.what());
  }
}

void ZoneNetwork::check_zone(ZoneId z) const {
  if (z < 0 || z >= zone_count()) {
    throw NetworkError("unknown zone index " + std::to_string(z));
  }
}

int ZoneNetwork::degree(ZoneId z) const {
  check_zone(z);
  return static_cast<int>(adjacency_[static_cast<std::size_t>(z)].size());
}

std::span<const ZoneId> ZoneNetwork::neighbors(ZoneId z) const {
  check_zone(z);
  return adjacency_[static_cast<std::size_t>(z)];
}

bool ZoneNetwork::adjacent(ZoneId a, ZoneId b) const {
  auto adj = neighbors(a);
  return std::binary_search(adj.begin(), adj.end(), b);
}

int ZoneNetwork::max_degree() const {
  if (adjacency_.empty()) throw NetworkError("empty zone network");
  return max_degree_;
}

std::vector<ZoneId> ZoneNetwork::action_space(ZoneId z) const {
  auto adj = neighbors(z);
  std::vector<ZoneId> out;
  out.reserve(adj.size() + 1);
  out.push_back(z);
  out.insert(out.end(), adj.begin(), adj.end());
  return out;
}

const ActionMask& ZoneNetwork::action_mask(ZoneId z) const {
  check_zone(z);
  return masks_[static_cast<std::size_t>(z)];
}

ZoneId ZoneNetwork::resolve_action(ZoneId z, ActionIndex a) const {
  if (!action_mask(z).passes(a)) {
    throw NetworkError("action " + std::to_string(a) + " is masked off in zone " +
                       std::to_string(z));
  }
  if (a == 0) return z;
  return adjacency_[static_cast<std::size_t>(z)][static_cast<std::size_t>(a - 1)];
}

ExternalZoneId ZoneNetwork::external_id(ZoneId z) const {
  check_zone(z);
  return external_ids_[static_cast<std::size_t>(z)];
}

std::optional<ZoneId> ZoneNetwork::find(ExternalZoneId external) const {
  auto it = std::lower_bound(external_ids_.begin(), external_ids_.end(), external);
  if (it == external_ids_.end() || *it != external) return std::nullopt;
  return static_cast<ZoneId>(it - external_ids_.begin());
}

ZoneId ZoneNetwork::dense_id(ExternalZoneId external) const {
  if (auto z = find(external)) return *z;
  throw NetworkError("unknown zone ID " + std::to_string(external));
}

}  // namespace taxirl
