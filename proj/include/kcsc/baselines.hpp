#pragma once

// Unconstrained multivariate CSC encoders used for comparison. Both minimise
//     1/2 ||y - sum_k d_k * z_k||^2 + alpha sum_k ||z_k||_1
// over full activation tensors, for every signal independently.

#include <span>
#include <string>
#include <vector>

#include "kcsc/dstep.hpp"
#include "kcsc/tensor.hpp"

namespace kcsc::baselines {

using DenseActivationSet = std::vector<std::vector<DenseTensor>>;  ///< [signal][atom]

struct BaselineOptions {
  double alpha = 0.1;
  double rho = 1.0;          ///< ADMM penalty (FCSC-ShM only)
  double tolerance = 1e-5;
  int max_iters = 500;
  bool nonnegative = false;
};

struct BaselineReport {
  long iterations = 0;
  double seconds = 0.0;
  bool converged = true;  ///< all signals converged
};

/// ADMM; per-frequency systems are identity plus one rank-one term and are
/// inverted with the Sherman-Morrison formula.
DenseActivationSet fcsc_shm_encode(std::span<const DenseTensor> signals, const Dictionary& d,
                                   const BaselineOptions& options, BaselineReport* report = nullptr);

/// FISTA with the gradient evaluated in the Fourier domain.
DenseActivationSet convfista_fd_encode(std::span<const DenseTensor> signals, const Dictionary& d,
                                       const BaselineOptions& options, BaselineReport* report = nullptr);

enum class Method { ConvFistaFD, FcscShM };

/// Parses "convfista" / "convfista-fd" and "fcsc" / "fcsc-shm" (case-insensitive).
Method parse_method(const std::string& name);
std::string method_name(Method m);

DenseActivationSet encode(Method m, std::span<const DenseTensor> signals, const Dictionary& d,
                          const BaselineOptions& options, BaselineReport* report = nullptr);

struct DenseFitResult {
  Dictionary dictionary;
  DenseActivationSet activations;
  std::vector<double> objective_trace;
  int sweeps = 0;
  long iterations = 0;
  double encode_seconds = 0.0;
  double dstep_seconds = 0.0;
};

/// Dictionary learning that alternates the chosen encoder with the ADMM
/// dictionary update; stops on a relative objective change below `tolerance`.
DenseFitResult learn_dictionary(Method m, std::span<const DenseTensor> signals, const Dictionary& initial,
                                const BaselineOptions& options, const dstep::DStepOptions& dstep_options,
                                int max_sweeps = 100, double tolerance = 1e-4);

DenseTensor reconstruct_dense(const Dictionary& d, std::span<const DenseTensor> acts);

/// Gradient of the fidelity with respect to every activation tensor.
std::vector<DenseTensor> fidelity_gradient(const DenseTensor& y, const Dictionary& d, std::span<const DenseTensor> acts);

double dense_objective(std::span<const DenseTensor> signals, const Dictionary& d, const DenseActivationSet& acts,
                       double alpha);

}  // namespace kcsc::baselines
