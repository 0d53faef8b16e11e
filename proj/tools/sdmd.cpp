#include "sdmd/cli.hpp"

int main(int argc, char** argv)
{
    return sdmd::cli::run(argc, argv);
}
