#pragma once

#include <stdexcept>
#include <string>

namespace dintr {

// Base for everything thrown by the library. CLI maps config_error -> exit 2,
// any other error -> exit 3.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

struct shape_error : error {
    explicit shape_error(const std::string& msg) : error("shape: " + msg) {}
};

struct numeric_error : error {
    explicit numeric_error(const std::string& msg) : error("numeric: " + msg) {}
};

struct index_error : error {
    explicit index_error(const std::string& msg) : error("index: " + msg) {}
};

struct contract_error : error {
    explicit contract_error(const std::string& msg) : error("contract: " + msg) {}
};

struct config_error : error {
    explicit config_error(const std::string& msg) : error("config: " + msg) {}
};

struct io_error : error {
    explicit io_error(const std::string& msg) : error("io: " + msg) {}
};

struct bounds_error : error {
    explicit bounds_error(const std::string& msg) : error("bounds: " + msg) {}
};

struct vocab_error : error {
    explicit vocab_error(const std::string& msg) : error("vocab: " + msg) {}
};

struct degenerate_indicator_error : error {
    explicit degenerate_indicator_error(const std::string& msg)
        : error("degenerate indicator: " + msg) {}
};

struct instability_error : error {
    explicit instability_error(const std::string& msg) : error("instability: " + msg) {}
};

struct divergence_error : error {
    explicit divergence_error(const std::string& msg) : error("divergence: " + msg) {}
};

// Signal, not a failure: extraction found nothing for a target this frame.
struct lost_target_error : error {
    explicit lost_target_error(const std::string& msg) : error("lost target: " + msg) {}
};

struct bootstrap_error : error {
    explicit bootstrap_error(const std::string& msg) : error("bootstrap: " + msg) {}
};

struct undefined_metric_error : error {
    explicit undefined_metric_error(const std::string& msg) : error("undefined metric: " + msg) {}
};

} // namespace dintr
