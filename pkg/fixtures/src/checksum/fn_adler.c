__int64 __fastcall fn_adler(unsigned __int8 *a1, int a2)
{
  unsigned int v2; // eax
  unsigned int v3; // edx
  int v6; // ecx
  unsigned __int8 v7[16]; // [rsp+0h]
  int i; // [rsp+20h]
  int j; // [rsp+24h]

  v2 = 1;
  v3 = 0;
  for ( i = 0; i < a2; i += 16 )
  {
    v6 = a2 - i;
    if ( v6 > 16 )
      v6 = 16;
    for ( j = 0; j < v6; ++j )
      v7[j] = a1[i + j];
    for ( j = 0; j < v6; ++j )
    {
      v2 = (v2 + v7[j]) % 0xFFF1;
      v3 = (v3 + v2) % 0xFFF1;
    }
  }
  return ((__int64)v3 << 16) | v2;
}
