#pragma once

#include <stdexcept>
#include <string>

namespace stochcep {

/// Base for all library errors. `code()` is a short machine-readable tag
/// that the CLI prints on failure.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define STOCHCEP_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& message) : Error(tag, message) {} \
    }

STOCHCEP_DEFINE_ERROR(LoadError, "load");
STOCHCEP_DEFINE_ERROR(SpecError, "spec");
STOCHCEP_DEFINE_ERROR(SplitError, "split");
STOCHCEP_DEFINE_ERROR(ParameterError, "parameter");
STOCHCEP_DEFINE_ERROR(SelectionError, "selection");
STOCHCEP_DEFINE_ERROR(ClusteringError, "clustering");
STOCHCEP_DEFINE_ERROR(BuildError, "build");
STOCHCEP_DEFINE_ERROR(SolverError, "solver");
STOCHCEP_DEFINE_ERROR(EvaluationError, "evaluation");
STOCHCEP_DEFINE_ERROR(FitError, "fit");
STOCHCEP_DEFINE_ERROR(ConfigError, "config");
STOCHCEP_DEFINE_ERROR(IoError, "io");

#undef STOCHCEP_DEFINE_ERROR

}  // namespace stochcep
