#include <algorithm>
#include <cmath>
#include <limits>

#include "comet/workload.hpp"

namespace comet {

DenseTensor DenseTensor::zeros(std::vector<Extent> shape) { return filled(std::move(shape), 0.0); }

DenseTensor DenseTensor::filled(std::vector<Extent> shape, double v) {
  DenseTensor t;
  t.shape = std::move(shape);
  Extent n = 1;
  for (auto e : t.shape) n *= e;
  t.data.assign(static_cast<size_t>(n), v);
  return t;
}

Extent DenseTensor::elements() const {
  Extent n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

size_t flat_index(const std::vector<Extent>& shape, const std::vector<Extent>& idx) {
  size_t f = 0;
  for (size_t d = 0; d < shape.size(); ++d) f = f * static_cast<size_t>(shape[d]) +
                                               static_cast<size_t>(idx[d]);
  return f;
}

}  // namespace

double& DenseTensor::at(const std::vector<Extent>& idx) { return data[flat_index(shape, idx)]; }
double DenseTensor::at(const std::vector<Extent>& idx) const {
  return data[flat_index(shape, idx)];
}

namespace {

// Reads a value from `t` at the coordinates named by (dim_names -> coord),
// broadcasting over dims `t` lacks or holds at extent 1.
double read_broadcast(const TensorSpec& spec, const DenseTensor& t,
                      const std::map<std::string, Extent>& coord) {
  std::vector<Extent> idx(spec.dims.size(), 0);
  for (size_t d = 0; d < spec.dims.size(); ++d) {
    if (spec.dims[d].extent == 1) continue;
    auto it = coord.find(spec.dims[d].name);
    if (it != coord.end()) idx[d] = it->second;
  }
  return t.at(idx);
}

// Iterates the full index space of `dims`, invoking fn(coord).
template <typename Fn>
void for_each_coord(const std::vector<Dim>& dims, Fn&& fn) {
  std::map<std::string, Extent> coord;
  for (const auto& d : dims) coord[d.name] = 0;
  std::vector<Extent> idx(dims.size(), 0);
  while (true) {
    for (size_t d = 0; d < dims.size(); ++d) coord[dims[d].name] = idx[d];
    fn(coord, idx);
    size_t d = dims.size();
    while (d > 0) {
      --d;
      if (++idx[d] < dims[d].extent) break;
      idx[d] = 0;
      if (d == 0) return;
    }
    if (dims.empty()) return;
  }
}

double apply_unary(const ElementaryOp& op, double x) {
  switch (op.unary) {
    case UnaryFn::Exp: return std::exp(x);
    case UnaryFn::Reciprocal: return 1.0 / x;
    case UnaryFn::Sqrt: return std::sqrt(x);
    case UnaryFn::ScaleByConst: return x * op.scale_const;
  }
  return x;
}

double apply_binary(BinaryFn fn, double a, double b) {
  switch (fn) {
    case BinaryFn::Add: return a + b;
    case BinaryFn::Sub: return a - b;
    case BinaryFn::Mul: return a * b;
    case BinaryFn::Div: return a / b;
    case BinaryFn::Max: return std::max(a, b);
  }
  return 0.0;
}

}  // namespace

std::map<std::string, DenseTensor> reference_eval(
    const CompoundGraph& graph, const std::map<std::string, DenseTensor>& inputs) {
  const CompoundGraph g = infer_shapes(graph);

  std::map<std::string, DenseTensor> env;
  for (const auto& e : g.externals) {
    if (g.producer_of(e) >= 0) continue;
    const auto& spec = g.tensor(e);
    auto it = inputs.find(e);
    if (it != inputs.end()) {
      if (it->second.elements() != spec.elements())
        fail(Errc::ShapeMismatch, "input '" + e + "' has " + std::to_string(it->second.elements()) +
                                      " elements, expected " + std::to_string(spec.elements()));
      env[e] = it->second;
      continue;
    }
    double fill;
    if (spec.init_value)
      fill = *spec.init_value;
    else if (spec.fill_default)
      fill = *spec.fill_default;
    else
      fail(Errc::MissingInput, "no value supplied for external input '" + e + "'");
    std::vector<Extent> shape;
    for (const auto& d : spec.dims) shape.push_back(d.extent);
    env[e] = DenseTensor::filled(shape, fill);
  }

  for (const auto& op : g.ops) {
    const auto& out_spec = g.tensor(op.output);
    std::vector<Extent> out_shape;
    for (const auto& d : out_spec.dims) out_shape.push_back(d.extent);
    DenseTensor out = DenseTensor::zeros(out_shape);

    switch (op.kind) {
      case ElementaryOp::Kind::Gemm: {
        const auto& a_spec = g.tensor(op.inputs[0]);
        const auto& b_spec = g.tensor(op.inputs[1]);
        const auto& a = env.at(op.inputs[0]);
        const auto& b = env.at(op.inputs[1]);
        std::string shared;
        for (const auto& d : a_spec.dims)
          if (b_spec.has_dim(d.name)) shared = d.name;
        const Extent kk = a_spec.extent_of(shared);
        for_each_coord(out_spec.dims, [&](const std::map<std::string, Extent>& coord,
                                          const std::vector<Extent>& idx) {
          double acc = 0.0;
          auto c = coord;
          for (Extent t = 0; t < kk; ++t) {
            c[shared] = t;
            acc += read_broadcast(a_spec, a, c) * read_broadcast(b_spec, b, c);
          }
          out.at(idx) = acc;
        });
        break;
      }
      case ElementaryOp::Kind::ElementwiseUnary: {
        const auto& in_spec = g.tensor(op.inputs[0]);
        const auto& in = env.at(op.inputs[0]);
        for_each_coord(out_spec.dims, [&](const std::map<std::string, Extent>& coord,
                                          const std::vector<Extent>& idx) {
          out.at(idx) = apply_unary(op, read_broadcast(in_spec, in, coord));
        });
        break;
      }
      case ElementaryOp::Kind::ElementwiseBinary: {
        const auto& a_spec = g.tensor(op.inputs[0]);
        const auto& b_spec = g.tensor(op.inputs[1]);
        const auto& a = env.at(op.inputs[0]);
        const auto& b = env.at(op.inputs[1]);
        for_each_coord(out_spec.dims, [&](const std::map<std::string, Extent>& coord,
                                          const std::vector<Extent>& idx) {
          out.at(idx) = apply_binary(op.binary, read_broadcast(a_spec, a, coord),
                                     read_broadcast(b_spec, b, coord));
        });
        break;
      }
      case ElementaryOp::Kind::RowReduction: {
        const auto& in_spec = g.tensor(op.inputs[0]);
        const auto& in = env.at(op.inputs[0]);
        const Extent r = in_spec.extent_of(op.reduced_dim);
        for_each_coord(out_spec.dims, [&](const std::map<std::string, Extent>& coord,
                                          const std::vector<Extent>& idx) {
          auto c = coord;
          double acc = op.reduce == ReduceFn::Max ? -std::numeric_limits<double>::infinity() : 0.0;
          for (Extent t = 0; t < r; ++t) {
            c[op.reduced_dim] = t;
            const double v = read_broadcast(in_spec, in, c);
            acc = op.reduce == ReduceFn::Max ? std::max(acc, v) : acc + v;
          }
          out.at(idx) = acc;
        });
        break;
      }
    }
    env[op.output] = std::move(out);
  }
  return env;
}

}  // namespace comet
