#ifndef SFM_ERRORS_HPP
#define SFM_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sfm {

// Error hierarchy mirrors the CLI exit-code contract:
// config problems -> 2, data problems -> 3, numerical failures -> 4.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class config_error : public error {
public:
    using error::error;
};

class data_error : public error {
public:
    using error::error;
};

// Invalid parameter or argument domain (negative variance, s < 0, ...).
class domain_error : public error {
public:
    using error::error;
};

// Overflow, non-convergence, failed evaluation.
class numeric_error : public error {
public:
    using error::error;
};

// Non-convergence diagnostic carrying the log-likelihood trace.
class convergence_error : public numeric_error {
public:
    convergence_error(const std::string& msg, std::vector<std::pair<int, double>> trace)
        : numeric_error(msg), trace_(std::move(trace)) {}
    const std::vector<std::pair<int, double>>& trace() const { return trace_; }

private:
    std::vector<std::pair<int, double>> trace_;
};

} // namespace sfm

#endif
