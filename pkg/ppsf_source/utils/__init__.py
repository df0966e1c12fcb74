"""Models and errors shared by the toolkit modules."""
