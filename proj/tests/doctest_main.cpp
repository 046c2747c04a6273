#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "iagc/runtime.hpp"

int main(int argc, char** argv) {
    iagc::runtime_init();
    return doctest::Context(argc, argv).run();
}
