"""HTTP service exposing the workbench as a pure-compute JSON API."""
