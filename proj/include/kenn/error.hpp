#pragma once

#include <stdexcept>
#include <string>

namespace kenn {

// Error categories map 1:1 onto CLI exit codes:
//   input_error -> 2 (usage, paths, file formats)
//   data_error -> 3 (measures, sampling, solver)
//   numeric_error -> 4 (non-finite loss, trajectory blow-up)
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

struct input_error : error {
    explicit input_error(const std::string& msg) : error(msg) {}
};

struct data_error : error {
    explicit data_error(const std::string& msg) : error(msg) {}
};

struct numeric_error : error {
    explicit numeric_error(const std::string& msg) : error(msg) {}
};

}  // namespace kenn
