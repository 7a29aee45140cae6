#include "comet/mapspace.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <thread>

namespace comet {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::vector<Extent> divisors_of(Extent n) {
  std::vector<Extent> out;
  for (Extent d = 1; d * d <= n; ++d) {
    if (n % d) continue;
    out.push_back(d);
    if (d != n / d) out.push_back(n / d);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_pow2(Extent v) { return v > 0 && (v & (v - 1)) == 0; }

Extent pick(std::mt19937_64& rng, const std::vector<Extent>& options) {
  if (options.empty()) return 1;
  return options[std::uniform_int_distribution<size_t>(0, options.size() - 1)(rng)];
}

std::set<std::string> group_dims(const GroupConstraint& gc, const CompoundGraph& graph) {
  std::set<std::string> dims;
  for (const auto& sg : gc.subgroups)
    for (const auto& op_id : sg) {
      const auto& op = graph.op(op_id);
      for (const auto& tn : op.inputs)
        for (const auto& d : graph.tensor(tn).dims)
          if (d.extent > 1) dims.insert(d.name);
      for (const auto& d : graph.tensor(op.output).dims)
        if (d.extent > 1) dims.insert(d.name);
    }
  return dims;
}

}  // namespace

MappingInstance sample_instance(const MapSpaceConstraints& constraints, const CompoundGraph& graph,
                                const ArchSpec& arch, std::uint64_t rng_state) {
  if (constraints.groups.empty()) fail(Errc::Unsatisfiable, "constraints pin no groups");
  std::mt19937_64 rng(rng_state);
  MappingInstance inst;
  inst.collectives = constraints.collectives;

  for (const auto& gc : constraints.groups) {
    GroupSpec gs;
    gs.subgroups = gc.subgroups;
    gs.local_subgroups = gc.local_subgroups;

    const auto dims = group_dims(gc, graph);
    std::vector<LoopDim> dram, gb, ob;
    for (const auto& dim : dims) {
      Extent remaining = graph.dim_extent(dim);

      auto pinned_slot = [&](const char* slot) -> std::optional<Extent> {
        auto it = gc.pinned_factors.find(dim);
        if (it == gc.pinned_factors.end()) return std::nullopt;
        auto jt = it->second.find(slot);
        if (jt == it->second.end()) return std::nullopt;
        return jt->second;
      };
      auto take = [&](const char* slot, auto legal) -> Extent {
        if (auto pin = pinned_slot(slot)) {
          if (*pin < 1 || remaining % *pin != 0)
            fail(Errc::Unsatisfiable, "pinned factor " + std::to_string(*pin) + " for '" + dim +
                                          "' does not divide remaining extent " +
                                          std::to_string(remaining));
          remaining /= *pin;
          return *pin;
        }
        std::vector<Extent> options;
        for (Extent d : divisors_of(remaining))
          if (legal(d)) options.push_back(d);
        const Extent f = pick(rng, options);
        remaining /= f;
        return f;
      };

      const bool may_cluster = gc.cluster_dims.count(dim) > 0;
      const bool may_core = gc.core_dims.count(dim) > 0;
      const Extent f_cluster = take("cluster", [&](Extent d) {
        return may_cluster ? d <= arch.clusters() && (!gc.spatial_power_of_two || is_pow2(d))
                           : d == 1;
      });
      const Extent f_core = take("core", [&](Extent d) {
        return may_core ? d <= arch.cores_per_cluster() && (!gc.spatial_power_of_two || is_pow2(d))
                        : d == 1;
      });
      const Extent f_dram = take("dram", [](Extent) { return true; });
      const Extent f_gb = take("gb", [](Extent) { return true; });
      const Extent f_ob = take("ob", [](Extent) { return true; });

      if (f_dram > 1) dram.push_back({dim, f_dram, LoopKind::Temporal});
      if (f_cluster > 1) dram.push_back({dim, f_cluster, LoopKind::SpatialCluster});
      if (f_gb > 1) gb.push_back({dim, f_gb, LoopKind::Temporal});
      if (f_core > 1) gb.push_back({dim, f_core, LoopKind::SpatialCore});
      if (f_ob > 1) ob.push_back({dim, f_ob, LoopKind::Temporal});
    }
    std::shuffle(dram.begin(), dram.end(), rng);
    std::shuffle(gb.begin(), gb.end(), rng);
    std::shuffle(ob.begin(), ob.end(), rng);
    gs.dram_loops = dram;
    gs.gb_loops = gb;
    gs.ob_loops = ob;

    if (!gc.allowed_schedules.empty()) {
      gs.schedule = gc.allowed_schedules[std::uniform_int_distribution<size_t>(
          0, gc.allowed_schedules.size() - 1)(rng)];
    }
    inst.groups.push_back(std::move(gs));
  }
  return inst;
}

namespace {

struct Candidate {
  bool valid = false;
  bool oom = false;
  double latency = 0;
  double energy = 0;
};

Candidate evaluate_candidate(const MapSpaceConstraints& constraints, const CompoundGraph& graph,
                             const ArchSpec& arch, std::uint64_t state) {
  Candidate c;
  try {
    const auto inst = sample_instance(constraints, graph, arch, state);
    const auto tree = build_tree(inst, graph, arch);
    const auto fit = validate_fit(tree, arch);
    if (!fit.ok) {
      c.oom = true;
      return c;
    }
    const auto report = evaluate(tree, arch);
    c.valid = true;
    c.latency = report.total_ns;
    c.energy = report.energy.total_pj;
  } catch (const Error&) {
    c.valid = false;
  }
  return c;
}

int worker_count() {
  if (const char* env = std::getenv("COMET_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

}  // namespace

SearchResult search(const CompoundGraph& graph, const ArchSpec& arch,
                    const MapSpaceConstraints& constraints) {
  const int iterations = std::max(1, constraints.max_iterations);
  std::vector<Candidate> results(iterations);

  const int workers = std::min(worker_count(), iterations);
  if (workers <= 1) {
    for (int i = 0; i < iterations; ++i)
      results[i] =
          evaluate_candidate(constraints, graph, arch, splitmix64(constraints.seed + i));
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        while (true) {
          const int i = next.fetch_add(1);
          if (i >= iterations) return;
          results[i] =
              evaluate_candidate(constraints, graph, arch, splitmix64(constraints.seed + i));
        }
      });
    for (auto& t : pool) t.join();
  }

  SearchResult out;
  int best = -1;
  for (int i = 0; i < iterations; ++i) {
    const auto& c = results[i];
    if (c.oom) ++out.oom;
    if (!c.valid) {
      if (!c.oom) ++out.invalid;
      continue;
    }
    ++out.evaluated;
    const bool better = best < 0 || c.latency < results[best].latency ||
                        (c.latency == results[best].latency && c.energy < results[best].energy);
    if (better) {
      best = i;
      out.trace.emplace_back(i, c.latency);
    }
  }
  if (best < 0) fail(Errc::NoValidMapping, "no candidate mapping was valid");

  out.found = true;
  out.best_iteration = best;
  out.best = sample_instance(constraints, graph, arch, splitmix64(constraints.seed + best));
  out.best_report = evaluate(build_tree(out.best, graph, arch), arch);
  return out;
}

MapSpaceConstraints default_constraints(const CompoundGraph& graph) {
  MapSpaceConstraints cons;
  std::vector<std::vector<std::string>> groups = graph.fusion_groups;
  if (groups.empty()) {
    groups.emplace_back();
    for (const auto& op : graph.ops) groups.back().push_back(op.id);
  }
  for (const auto& g : groups) {
    GroupConstraint gc;
    for (const auto& op_id : g) gc.subgroups.push_back({op_id});
    // Spatial unrolling only over dims every op's output indexes, so no
    // cross-instance partials arise without an explicit collective.
    std::set<std::string> safe;
    bool first = true;
    for (const auto& op_id : g) {
      const auto& out = graph.tensor(graph.op(op_id).output);
      std::set<std::string> mine;
      for (const auto& d : out.dims)
        if (d.extent > 1) mine.insert(d.name);
      if (first) {
        safe = mine;
        first = false;
      } else {
        std::set<std::string> inter;
        std::set_intersection(safe.begin(), safe.end(), mine.begin(), mine.end(),
                              std::inserter(inter, inter.begin()));
        safe = inter;
      }
    }
    gc.cluster_dims = safe;
    gc.core_dims = safe;
    cons.groups.push_back(std::move(gc));
  }
  return cons;
}

}  // namespace comet
