pub mod fixture_llm;
