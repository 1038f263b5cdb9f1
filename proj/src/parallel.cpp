/*
   Copyright 2026 The cellmix authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "cellmix/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace cellmix {

int resolve_jobs(int flag)
{
    if (flag > 0) return flag;
    if (const char* env = std::getenv("CELLMIX_JOBS")) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(env, &used);
            if (used == std::string(env).size() && v > 0) return v;
        } catch (...) {
        }
    }
    return omp_get_num_procs() > 0 ? omp_get_num_procs() : 1;
}

} // namespace cellmix
