#pragma once

#include <stdexcept>
#include <string>

namespace csb_ewma {

// Invalid parameters, mismatched configuration or state.
class config_error : public std::invalid_argument {
public:
    explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or incomplete observations.
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace csb_ewma
