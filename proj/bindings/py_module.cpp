#include <pybind11/pybind11.h>
PYBIND11_MODULE(_tomoselfdeq, m) { m.doc() = "placeholder"; }
