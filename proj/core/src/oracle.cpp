#include "comet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace comet {

namespace {

class Simulator {
 public:
  Simulator(const MappingTree& tree, const ArchSpec& arch, std::size_t budget, bool keep_trace)
      : tree_(tree), arch_(arch), budget_(budget), keep_trace_(keep_trace) {}

  OracleResult run() {
    result_.total_ns = sim(*tree_.root);
    result_.event_count = events_;
    return std::move(result_);
  }

 private:
  void emit(double start, double end, const char* kind, int node_id, Extent iter) {
    if (++events_ > budget_)
      fail(Errc::EventBudgetExceeded,
           "event budget of " + std::to_string(budget_) + " exceeded");
    if (keep_trace_) result_.trace.push_back({start, end, kind, node_id, iter});
  }

  struct ChildTask {
    const MapNode* node = nullptr;
    bool is_collective = false;
    double duration = 0;    // one full run (tile) or one invocation (collective)
    double fill_ns = 0;     // external read-port work per parent iteration
    double drain_ns = 0;    // external write-port work per parent iteration
    double sibling_ns = 0;  // serialized transfers around this child
  };

  std::vector<ChildTask> child_tasks(const MapNode& node) {
    const double bw = level_bandwidth(arch_, node.level, Direction::Read);
    const double n = double(std::max<Extent>(1, node.analysis.iterations));
    std::vector<ChildTask> tasks;
    int child_index = 0;
    for (const auto& child : node.children) {
      ChildTask t;
      t.node = child.get();
      if (child->kind == MapNode::Kind::Collective) {
        t.is_collective = true;
        const auto& ci = *child->collective;
        const auto plan =
            plan_collective(ci.spec.type, ci.participants, ci.payload_bytes, ci.grid);
        t.duration = collective_latency(plan, arch_, ci.mem_level).total_ns;
      } else {
        t.duration = sim(*child);
        for (const auto& f : node.analysis.flows) {
          if (f.child_index != child_index) continue;
          const double bytes = f.bytes_per_delivery * double(f.deliveries) *
                               (f.dir == Direction::Write ? f.child_copies : 1.0) / n;
          const double ns = mem_lat_ns(bytes, bw);
          if (f.sibling)
            t.sibling_ns += ns;
          else if (f.dir == Direction::Read)
            t.fill_ns += ns;
          else
            t.drain_ns += ns;
        }
      }
      tasks.push_back(t);
      ++child_index;
    }
    return tasks;
  }

  // Double-buffered pipeline over n iterations of a sequential child pass.
  // The head fill gates each pass; the remaining fills stream behind it on
  // the read port. Drains ride the write port after each pass.
  double sim_sequential_stage(const MapNode& node, const std::vector<ChildTask>& tasks) {
    const Extent n = std::max<Extent>(1, node.analysis.iterations);
    const double bw = level_bandwidth(arch_, node.level, Direction::Read);
    const double head = mem_lat_ns(node.analysis.cs_fill_bytes, bw);
    const double tail = mem_lat_ns(node.analysis.cs_drain_bytes, bw);

    double pass_work = 0, fill_work = 0, drain_work = 0;
    for (const auto& t : tasks) {
      pass_work += t.duration + t.sibling_ns;
      fill_work += t.fill_ns;
      drain_work += t.drain_ns;
    }

    double read_free = 0, write_free = 0;
    double prev_pass_start = 0, prev_pass_end = 0;
    double last_drain_end = 0;
    for (Extent i = 0; i < n; ++i) {
      // The first pass waits only on the gating head fill; later iterations
      // prefetch their full fill behind the running pass.
      const double fill_i = i == 0 ? head : fill_work;
      const double fill_start = std::max(read_free, i == 0 ? 0.0 : prev_pass_start);
      const double fill_end = fill_start + fill_i;
      if (fill_i > 0) emit(fill_start, fill_end, "fill", node.node_id, i);
      read_free = fill_end;

      const double pass_start = std::max(fill_end, prev_pass_end);
      double t = pass_start;
      for (const auto& task : tasks) {
        if (task.is_collective) {
          emit(t, t + task.duration, "collective", task.node->node_id, i);
          t += task.duration;
          continue;
        }
        if (task.sibling_ns > 0) t += task.sibling_ns;
        emit(t, t + task.duration, "compute", task.node->node_id, i);
        t += task.duration;
      }
      const double pass_end = std::max(t, pass_start + pass_work);

      const double drain_i = i + 1 == n ? tail : drain_work;
      const double drain_start = std::max(pass_end, write_free);
      if (drain_i > 0) emit(drain_start, drain_start + drain_i, "drain", node.node_id, i);
      write_free = drain_start + drain_i;
      last_drain_end = std::max(last_drain_end, drain_start + drain_i);

      prev_pass_start = pass_start;
      prev_pass_end = pass_end;
    }
    return std::max(prev_pass_end, last_drain_end);
  }

  // Concurrent children free-run on their own iteration chains and contend
  // for the stage's ports; collectives act as per-iteration barriers.
  double sim_concurrent_stage(const MapNode& node, const std::vector<ChildTask>& tasks) {
    const Extent n = std::max<Extent>(1, node.analysis.iterations);
    double read_free = 0, write_free = 0;
    std::vector<double> exec_end(tasks.size(), 0), exec_start(tasks.size(), 0);
    double barrier = 0;
    double total = 0;
    for (Extent i = 0; i < n; ++i) {
      double iter_end = barrier;
      for (size_t c = 0; c < tasks.size(); ++c) {
        const auto& task = tasks[c];
        if (task.is_collective) {
          const double start = iter_end;
          emit(start, start + task.duration, "collective", task.node->node_id, i);
          iter_end = start + task.duration;
          continue;
        }
        const double fill_start = std::max({read_free, exec_start[c], barrier});
        const double fill_end = fill_start + task.fill_ns;
        if (task.fill_ns > 0) emit(fill_start, fill_end, "fill", task.node->node_id, i);
        read_free = fill_end;

        const double start = std::max(fill_end, exec_end[c]);
        emit(start, start + task.duration, "compute", task.node->node_id, i);
        exec_start[c] = start;
        exec_end[c] = start + task.duration;

        if (task.drain_ns > 0) {
          const double drain_start = std::max(exec_end[c], write_free);
          emit(drain_start, drain_start + task.drain_ns, "drain", task.node->node_id, i);
          write_free = drain_start + task.drain_ns;
        }
        iter_end = std::max(iter_end, exec_end[c]);
      }
      barrier = iter_end;
      total = std::max({total, iter_end, write_free});
    }
    return total;
  }

  double sim_ob(const MapNode& node) {
    const Extent n = std::max<Extent>(1, node.analysis.iterations);
    std::vector<double> computes;
    std::vector<double> fetches;
    const double obw = level_bandwidth(arch_, MemLevelName::OB, Direction::Read);
    for (const auto& leaf : node.children) {
      computes.push_back(sim(*leaf));
      fetches.push_back(mem_lat_ns(leaf->leaf_in_bytes + leaf->leaf_out_bytes, obw));
    }
    if (node.schedule == Schedule::Sequential) {
      double pass = 0;
      for (double c : computes) pass += c;
      for (Extent i = 0; i < n; ++i)
        emit(double(i) * pass, double(i + 1) * pass, "compute", node.node_id, i);
      return double(n) * pass;
    }
    // Concurrent leaves: operand fetches serialize on the OB port, computes
    // overlap, next iteration prefetches behind the current one.
    double port_free = 0;
    std::vector<double> end(computes.size(), 0), start_prev(computes.size(), 0);
    double total = 0;
    for (Extent i = 0; i < n; ++i) {
      for (size_t c = 0; c < computes.size(); ++c) {
        const double f_start = std::max(port_free, start_prev[c]);
        const double f_end = f_start + fetches[c];
        port_free = f_end;
        const double s = std::max(f_end, end[c]);
        emit(s, s + computes[c], "compute", node.children[c]->node_id, i);
        start_prev[c] = s;
        end[c] = s + computes[c];
        total = std::max(total, end[c]);
      }
    }
    return total;
  }

  double sim(const MapNode& node) {
    auto it = cache_.find(node.node_id);
    if (it != cache_.end()) return it->second;
    double dur = 0;
    switch (node.kind) {
      case MapNode::Kind::Leaf: {
        const auto& op = tree_.graph->op(node.op_id);
        dur = compute_time_ns(op, node.on_gemm_unit, arch_, *tree_.graph, node.leaf_tile);
        break;
      }
      case MapNode::Kind::Collective: {
        const auto& ci = *node.collective;
        const auto plan =
            plan_collective(ci.spec.type, ci.participants, ci.payload_bytes, ci.grid);
        dur = collective_latency(plan, arch_, ci.mem_level).total_ns;
        break;
      }
      case MapNode::Kind::ObStage: dur = sim_ob(node); break;
      case MapNode::Kind::Root:
      case MapNode::Kind::DramStage:
      case MapNode::Kind::GbStage: {
        const auto tasks = child_tasks(node);
        dur = node.schedule == Schedule::Sequential ? sim_sequential_stage(node, tasks)
                                                    : sim_concurrent_stage(node, tasks);
        break;
      }
    }
    cache_[node.node_id] = dur;
    return dur;
  }

  const MappingTree& tree_;
  const ArchSpec& arch_;
  std::size_t budget_;
  bool keep_trace_;
  OracleResult result_;
  std::size_t events_ = 0;
  std::map<int, double> cache_;
};

}  // namespace

OracleResult simulate(const MappingTree& tree, const ArchSpec& arch, std::size_t event_budget,
                      bool keep_trace) {
  return Simulator(tree, arch, event_budget, keep_trace).run();
}

Comparison compare(const MappingTree& tree, const ArchSpec& arch) {
  Comparison c;
  c.analytical_ns = evaluate(tree, arch).total_ns;
  c.oracle_ns = simulate(tree, arch).total_ns;
  c.relative_error =
      c.oracle_ns > 0 ? std::abs(c.analytical_ns - c.oracle_ns) / c.oracle_ns : 0.0;
  return c;
}

}  // namespace comet
