#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "pansharp/common.hpp"

int main(int argc, char** argv) {
    pansharp::apply_thread_env();
    return doctest::Context(argc, argv).run();
}
