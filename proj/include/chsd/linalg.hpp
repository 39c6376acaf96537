#pragma once

#include <memory>
#include <optional>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "chsd/assembly.hpp"

namespace chsd {

/// Sparse system with optional strong constraints (eliminated with lifted
/// values) and an optional mean-zero constraint w' x = 0 enforced through a
/// bordered scalar-multiplier row, which keeps the constraint exact without
/// pinning a dof.
struct LinearSystem {
    SparseOperator A;
    Eigen::VectorXd b;
    std::vector<int> constrained;
    Eigen::VectorXd constrained_values;
    Eigen::VectorXd mean_zero_weight; // empty when absent

    LinearSystem() = default;
    LinearSystem(SparseOperator A_, Eigen::VectorXd b_) : A(std::move(A_)), b(std::move(b_)) {}
};

/// Reusable factorization of the reduced (and possibly bordered) operator.
/// Immutable once built; concurrent solves are safe.
class Factorized {
public:
    Factorized(const SparseOperator& A, std::vector<int> constrained,
               Eigen::VectorXd constrained_values, Eigen::VectorXd mean_zero_weight) {
        n_full_ = static_cast<int>(A.rows());
        constrained_ = std::move(constrained);
        values_ = std::move(constrained_values);
        std::vector<char> is_fixed(n_full_, 0);
        for (int d : constrained_) is_fixed[d] = 1;
        full_to_free_.assign(n_full_, -1);
        for (int i = 0; i < n_full_; ++i)
            if (!is_fixed[i]) {
                full_to_free_[i] = n_free_;
                free_to_full_.push_back(i);
                ++n_free_;
            }

        has_border_ = mean_zero_weight.size() > 0;
        int n = n_free_ + (has_border_ ? 1 : 0);
        std::vector<Triplet> trips;
        trips.reserve(A.nonZeros());
        lift_ = Eigen::VectorXd::Zero(n_free_);
        for (int k = 0; k < A.outerSize(); ++k)
            for (SparseOperator::InnerIterator it(A, k); it; ++it) {
                int r = full_to_free_[static_cast<int>(it.row())];
                int c = full_to_free_[static_cast<int>(it.col())];
                if (r < 0) continue;
                if (c >= 0) {
                    trips.emplace_back(r, c, it.value());
                } else {
                    // move A_fg * g to the right-hand side
                    int ci = static_cast<int>(it.col());
                    double g = value_of(ci);
                    lift_[r] += it.value() * g;
                }
            }
        if (has_border_) {
            for (int i = 0; i < n_full_; ++i) {
                int r = full_to_free_[i];
                if (r < 0 || mean_zero_weight[i] == 0.0) continue;
                trips.emplace_back(r, n_free_, mean_zero_weight[i]);
                trips.emplace_back(n_free_, r, mean_zero_weight[i]);
            }
        }
        SparseOperator R(n, n);
        R.setFromTriplets(trips.begin(), trips.end());
        R.makeCompressed();
        reduced_ = R;
        lu_.compute(reduced_);
        if (lu_.info() != Eigen::Success)
            throw std::runtime_error("Factorized: singular system (zero pivot)");
    }

    /// Solve with right-hand side b (full size), returning the full vector
    /// with constrained values in place.
    Eigen::VectorXd solve(const Eigen::VectorXd& b, double tol = 1e-10) const {
        Eigen::VectorXd rb(reduced_.rows());
        rb.setZero();
        for (int i = 0; i < n_free_; ++i) rb[i] = b[free_to_full_[i]] - lift_[i];
        Eigen::VectorXd x = lu_.solve(rb);
        double bn = rb.norm();
        if (bn > 0.0) {
            Eigen::VectorXd r = rb - reduced_ * x;
            if (r.norm() > tol * bn) {
                x += lu_.solve(r); // one refinement pass
                r = rb - reduced_ * x;
                if (r.norm() > tol * bn)
                    throw std::runtime_error("Factorized::solve: residual above tolerance");
            }
        }
        Eigen::VectorXd full(n_full_);
        for (int i = 0; i < n_full_; ++i) {
            int f = full_to_free_[i];
            full[i] = f >= 0 ? x[f] : value_of(i);
        }
        return full;
    }

    int free_count() const { return n_free_; }

private:
    double value_of(int full_dof) const {
        auto it = std::lower_bound(constrained_.begin(), constrained_.end(), full_dof);
        return values_[it - constrained_.begin()];
    }

    int n_full_ = 0, n_free_ = 0;
    bool has_border_ = false;
    std::vector<int> constrained_;
    Eigen::VectorXd values_;
    std::vector<int> full_to_free_, free_to_full_;
    Eigen::VectorXd lift_;
    SparseOperator reduced_;
    Eigen::SparseLU<SparseOperator> lu_;
};

inline Eigen::VectorXd solve_linear(const LinearSystem& sys, double tol = 1e-10) {
    if (tol <= 0.0) throw std::invalid_argument("solve_linear: tol must be > 0");
    Factorized f(sys.A, sys.constrained, sys.constrained_values, sys.mean_zero_weight);
    return f.solve(sys.b, tol);
}

/// Helper for assembling block systems (Stokes-Darcy and friends) out of
/// already-assembled operators, with per-field offsets.
class BlockSystem {
public:
    /// Returns the offset of the new field.
    int add_field(int dofs) {
        offsets_.push_back(size_);
        sizes_.push_back(dofs);
        size_ += dofs;
        return offsets_.back();
    }

    void add_block(int field_r, int field_c, const SparseOperator& op, double scale = 1.0,
                   bool transpose = false) {
        int r0 = offsets_[field_r], c0 = offsets_[field_c];
        for (int k = 0; k < op.outerSize(); ++k)
            for (SparseOperator::InnerIterator it(op, k); it; ++it) {
                int r = transpose ? static_cast<int>(it.col()) : static_cast<int>(it.row());
                int c = transpose ? static_cast<int>(it.row()) : static_cast<int>(it.col());
                trips_.emplace_back(r0 + r, c0 + c, scale * it.value());
            }
    }

    void add_rhs(int field, const Eigen::VectorXd& v, double scale = 1.0) {
        rhs_parts_.emplace_back(field, scale * v);
    }

    void constrain_field(int field, const std::vector<int>& dofs, const Eigen::VectorXd& vals) {
        for (size_t i = 0; i < dofs.size(); ++i) {
            constrained_.push_back(offsets_[field] + dofs[i]);
            values_.push_back(vals[static_cast<int>(i)]);
        }
    }

    void set_mean_zero(int field, const Eigen::VectorXd& w) {
        mz_field_ = field;
        mz_weight_ = w;
    }

    LinearSystem build() const {
        LinearSystem sys;
        SparseOperator A(size_, size_);
        A.setFromTriplets(trips_.begin(), trips_.end());
        A.makeCompressed();
        sys.A = std::move(A);
        sys.b = Eigen::VectorXd::Zero(size_);
        for (const auto& [field, v] : rhs_parts_) sys.b.segment(offsets_[field], sizes_[field]) += v;
        // constraints must be sorted for the elimination bookkeeping
        std::vector<int> order(constrained_.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return constrained_[a] < constrained_[b]; });
        sys.constrained_values.resize(static_cast<int>(order.size()));
        for (size_t i = 0; i < order.size(); ++i) {
            sys.constrained.push_back(constrained_[order[i]]);
            sys.constrained_values[static_cast<int>(i)] = values_[order[i]];
        }
        if (mz_field_ >= 0) {
            sys.mean_zero_weight = Eigen::VectorXd::Zero(size_);
            sys.mean_zero_weight.segment(offsets_[mz_field_], sizes_[mz_field_]) = mz_weight_;
        }
        return sys;
    }

    int offset(int field) const { return offsets_[field]; }
    int size() const { return size_; }

private:
    int size_ = 0;
    std::vector<int> offsets_, sizes_;
    std::vector<Triplet> trips_;
    std::vector<std::pair<int, Eigen::VectorXd>> rhs_parts_;
    std::vector<int> constrained_;
    std::vector<double> values_;
    int mz_field_ = -1;
    Eigen::VectorXd mz_weight_;
};

} // namespace chsd
