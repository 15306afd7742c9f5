#include "eflab/autodiff.hpp"

#include "eflab/errors.hpp"

namespace eflab::ad {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1};
}

Matrix& Tape::grad_of(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Matrix value, std::string name) {
  return push({std::move(value), {}, {}, nullptr, std::move(name), -1});
}

Var Tape::parameter(Matrix const& value, std::size_t slot, std::string name) {
  return push({value, {}, {}, nullptr, std::move(name), static_cast<long>(slot)});
}

Var Tape::matmul(Var a, Var b) {
  Matrix v = value(a) * value(b);
  return push({std::move(v), {}, {a, b}, [](Tape& t, std::size_t self) {
                 auto const& g = t.grad_out(self);
                 auto const a = t.input(self, 0);
                 auto const b = t.input(self, 1);
                 t.grad_of(a.id).noalias() += g * t.value(b).transpose();
                 t.grad_of(b.id).noalias() += t.value(a).transpose() * g;
               },
               "matmul", -1});
}

Var Tape::add(Var a, Var b) {
  Matrix v = value(a) + value(b);
  return push({std::move(v), {}, {a, b}, [](Tape& t, std::size_t self) {
                 auto const& g = t.grad_out(self);
                 t.grad_of(t.input(self, 0).id) += g;
                 t.grad_of(t.input(self, 1).id) += g;
               },
               "add", -1});
}

Var Tape::tanh(Var a) {
  Matrix v = value(a).array().tanh().matrix();
  return push({std::move(v), {}, {a}, [](Tape& t, std::size_t self) {
                 auto const& y = t.nodes_[self].value;
                 t.grad_of(t.input(self, 0).id).array() += t.grad_out(self).array() * (1.0 - y.array().square());
               },
               "tanh", -1});
}

Var Tape::scale(Var a, double c) {
  Matrix v = c * value(a);
  return push({std::move(v), {}, {a}, [c](Tape& t, std::size_t self) {
                 t.grad_of(t.input(self, 0).id) += c * t.grad_out(self);
               },
               "scale", -1});
}

Var Tape::row(Var table, Eigen::Index r) {
  Matrix v = value(table).row(r).transpose();
  return push({std::move(v), {}, {table}, [r](Tape& t, std::size_t self) {
                 t.grad_of(t.input(self, 0).id).row(r) += t.grad_out(self).transpose();
               },
               "row", -1});
}

Var Tape::concat(std::span<Var const> parts) {
  Eigen::Index rows = 0;
  for (auto p : parts) rows += value(p).rows();
  Matrix v(rows, 1);
  Eigen::Index off = 0;
  for (auto p : parts) {
    v.middleRows(off, value(p).rows()) = value(p);
    off += value(p).rows();
  }
  return push({std::move(v), {}, {parts.begin(), parts.end()}, [](Tape& t, std::size_t self) {
                 Eigen::Index off = 0;
                 for (auto const& in : t.nodes_[self].inputs) {
                   auto const rows = t.value(in).rows();
                   t.grad_of(in.id) += t.grad_out(self).middleRows(off, rows);
                   off += rows;
                 }
               },
               "concat", -1});
}

Var Tape::sum(std::span<Var const> parts) {
  Matrix v = value(parts.front());
  for (std::size_t k = 1; k < parts.size(); ++k) v += value(parts[k]);
  return push({std::move(v), {}, {parts.begin(), parts.end()}, [](Tape& t, std::size_t self) {
                 for (auto const& in : t.nodes_[self].inputs) t.grad_of(in.id) += t.grad_out(self);
               },
               "sum", -1});
}

Var Tape::mean(std::span<Var const> parts) {
  return scale(sum(parts), 1.0 / static_cast<double>(parts.size()));
}

Var Tape::custom(std::vector<Var> inputs, Matrix value, Backward backward, std::string name) {
  return push({std::move(value), {}, std::move(inputs), std::move(backward), std::move(name), -1});
}

void Tape::backward(Var root) {
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_of(root.id).setOnes();
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (!n.grad.allFinite())
      throw NumericError("non-finite gradient at node " + std::to_string(i) + " (" + n.name + ")");
    if (n.backward) n.backward(*this, i);
  }
}

void Tape::parameter_grads(std::vector<Matrix>& grads) const {
  for (auto const& n : nodes_) {
    if (n.slot < 0 || n.grad.size() == 0) continue;
    auto& g = grads[static_cast<std::size_t>(n.slot)];
    if (g.size() == 0) g = Matrix::Zero(n.value.rows(), n.value.cols());
    g += n.grad;
  }
}

}  // namespace eflab::ad
