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

/// @file parallel.hpp
/// @brief Worker-count resolution shared by the CLI and the drivers.

#pragma once

namespace cellmix {

/// flag > 0 wins; otherwise CELLMIX_JOBS if it parses as a positive
/// integer; otherwise the number of available processors.
int resolve_jobs(int flag = 0);

} // namespace cellmix
