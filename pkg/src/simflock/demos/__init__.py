"""Built-in closed-form demo simulators speaking the line protocol."""
