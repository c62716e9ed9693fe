#pragma once

#include <mutex>

namespace flowmixer::detail {

// FFTW planning is not thread safe; every plan creation and destruction takes this lock.
std::mutex& fftw_planner_mutex();

}  // namespace flowmixer::detail
