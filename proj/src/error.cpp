#include "flowmixer/error.hpp"

#include <iostream>

namespace flowmixer {

namespace {
WarningSink& sink() {
    static WarningSink s = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
    return s;
}
}  // namespace

void warn(const std::string& message) {
    if (sink()) sink()(message);
}

WarningSink set_warning_sink(WarningSink s) {
    std::swap(sink(), s);
    return s;
}

}  // namespace flowmixer
